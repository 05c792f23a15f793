//! Run configuration: a TOML file, `--set key=value` overrides, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::model::{DnnConfig, MhnConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mhn,
    Dnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mhn => "mhn",
            ModelKind::Dnn => "dnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Template-popularity buckets, e.g. `0,1,2,3-10,11-50,>50`.
    pub buckets: String,
    /// Reactant sets to collect per product; 0 skips execution.
    pub budget: usize,
    pub fpf: bool,
    pub screen_width: usize,
    pub batch_size: usize,
    pub split: String,
    pub bench_budgets: Vec<usize>,
    pub bench_repeats: usize,
    pub bench_warmup: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 3, 5, 10, 20, 50, 100],
            buckets: "0,1,2,3-10,11-50,>50".into(),
            budget: 0,
            fpf: true,
            screen_width: crate::fingerprints::DEFAULT_SCREEN_WIDTH,
            batch_size: 256,
            split: "test".into(),
            bench_budgets: crate::eval::DEFAULT_BUDGETS.to_vec(),
            bench_repeats: 3,
            bench_warmup: 1,
        }
    }
}

/// Default file locations; command-line paths take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub reactions: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub model: ModelKind,
    pub mhn: MhnConfig,
    pub dnn: DnnConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            model: ModelKind::Mhn,
            mhn: MhnConfig::default(),
            dnn: DnnConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `a.b.c=value` overrides. Values are TOML literals; anything
    /// that does not parse as one is taken as a string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, String> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| e.to_string())?;
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| format!("override {o:?} is not key=value"))?;
            let value = parse_value(raw.trim());
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut table = &mut root;
            for part in &parts[..parts.len() - 1] {
                let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
                table = entry.as_table_mut().ok_or_else(|| format!("override {key:?}: {part:?} is not a table"))?;
            }
            table.insert(parts[parts.len() - 1].to_string(), value);
        }
        toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| e.to_string())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overrides() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let o = cfg
            .with_overrides(&[
                "train.lr=0.01".into(),
                "mhn.hopfield.beta=0.5".into(),
                "model=dnn".into(),
                "paths.reactions=data/r.tsv".into(),
            ])
            .unwrap();
        assert_eq!(o.train.lr, 0.01);
        assert_eq!(o.mhn.hopfield.beta, 0.5);
        assert_eq!(o.model, ModelKind::Dnn);
        assert_eq!(o.paths.reactions, Some(PathBuf::from("data/r.tsv")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sead = 3").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rate = 3").is_err());
        assert!(RunConfig::default().with_overrides(&["train.nope=1".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["novalue".into()]).is_err());
    }
}

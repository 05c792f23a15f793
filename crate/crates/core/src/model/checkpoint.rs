//! The "MHNR1" checkpoint container: magic, a length-prefixed JSON
//! configuration section, then named little-endian f32 tensors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DnnConfig, MhnConfig, MoleculeFpConfig};
use super::dnn::DnnModel;
use super::featurize::Featurizer;
use super::mhn::MhnModel;
use super::{ModelError, Trainable};
use crate::chemgraph::{parse_template_with, ReactionTemplate, TemplateParseOptions};
use crate::fingerprints::MxfpSelector;
use crate::numkernel::{ParamStore, Tensor2};

const MAGIC: &[u8; 5] = b"MHNR1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTemplate {
    pub source: String,
    pub train_count: u32,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub introduced_maps: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Mhn { config: MhnConfig },
    Dnn { config: DnnConfig, output_ids: Vec<usize> },
}

/// Everything in the configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub model: ModelSpec,
    pub molecule_fp: MoleculeFpConfig,
    pub selector: Option<MxfpSelector>,
    pub templates: Vec<StoredTemplate>,
    /// Free-form snapshot of the run configuration, for provenance.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub enum StoredModel {
    Mhn(MhnModel),
    Dnn(DnnModel),
}

impl StoredModel {
    pub fn as_trainable(&self) -> &dyn Trainable {
        match self {
            StoredModel::Mhn(m) => m,
            StoredModel::Dnn(m) => m,
        }
    }

    pub fn as_trainable_mut(&mut self) -> &mut dyn Trainable {
        match self {
            StoredModel::Mhn(m) => m,
            StoredModel::Dnn(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: StoredModel,
    pub templates: Vec<ReactionTemplate>,
}

fn stored_templates(templates: &[ReactionTemplate]) -> Vec<StoredTemplate> {
    templates
        .iter()
        .map(|t| StoredTemplate {
            source: t.source_text().to_string(),
            train_count: t.train_count,
            introduced_maps: t.introduced_maps.clone(),
        })
        .collect()
}

fn write_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor2) {
    let (r, c) = t.shape();
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn params_tensors(store: &ParamStore) -> Vec<(String, Tensor2)> {
    store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect()
}

/// Serializes a model. `templates` must be the ordered set the model scores.
pub fn checkpoint_bytes(
    model: &StoredModel,
    templates: &[ReactionTemplate],
    run_config: serde_json::Value,
) -> Result<Vec<u8>, ModelError> {
    let (spec, seed, featurizer, mut tensors) = match model {
        StoredModel::Mhn(m) => {
            let mut tensors = params_tensors(m.params());
            for (l, noise) in m.template_noise().iter().enumerate() {
                tensors.push((format!("noise.{l}"), Tensor2::from_mat(noise)));
            }
            (ModelSpec::Mhn { config: m.config().clone() }, m.seed(), m.featurizer(), tensors)
        }
        StoredModel::Dnn(m) => (
            ModelSpec::Dnn { config: m.config().clone(), output_ids: m.output_ids().to_vec() },
            m.seed(),
            m.featurizer(),
            params_tensors(m.params()),
        ),
    };
    if templates.len() != model.as_trainable().num_templates() {
        return Err(ModelError::Checkpoint("template list does not match the model".into()));
    }
    let meta = CheckpointMeta {
        seed,
        model: spec,
        molecule_fp: featurizer.config().clone(),
        selector: featurizer.selector().cloned(),
        templates: stored_templates(templates),
        run_config,
    };
    let json = serde_json::to_vec(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors.drain(..) {
        write_tensor(&mut out, &name, &t);
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    model: &StoredModel,
    templates: &[ReactionTemplate],
    run_config: serde_json::Value,
) -> Result<(), ModelError> {
    let bytes = checkpoint_bytes(model, templates, run_config)?;
    let mut f = std::fs::File::create(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    f.write_all(&bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn load_params(store: &mut ParamStore, tensors: &mut BTreeMap<String, Tensor2>) -> Result<(), ModelError> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let p = store.get_mut(id);
        let t = tensors
            .remove(&p.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {}", p.name)))?;
        if t.shape() != p.value.shape() {
            return Err(ModelError::Checkpoint(format!("tensor {} has shape {:?}, expected {:?}", p.name, t.shape(), p.value.shape())));
        }
        p.value = t;
    }
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic; not an MHNR1 checkpoint".into()));
    }
    let len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(len)?).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let data: Vec<f32> = r
            .take(rows * cols * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if rows == 0 || cols == 0 {
            return Err(ModelError::Checkpoint(format!("tensor {name} is empty")));
        }
        tensors.insert(name, Tensor2::from_vec(rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint("trailing bytes after the last tensor".into()));
    }

    let templates = meta
        .templates
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let opts = TemplateParseOptions { introduced_maps: s.introduced_maps.clone() };
            parse_template_with(&s.source, &opts)
                .map(|t| t.with_id(i).with_train_count(s.train_count))
                .map_err(|e| ModelError::Checkpoint(format!("template {i}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let featurizer = Featurizer::with_selector(&meta.molecule_fp, meta.selector.clone())?;
    let model = match &meta.model {
        ModelSpec::Mhn { config } => {
            let mut m = MhnModel::new(config.clone(), featurizer, templates.clone(), meta.seed)?;
            let mut noise = Vec::new();
            for l in 0..config.hopfield.num_layers {
                let t = tensors
                    .remove(&format!("noise.{l}"))
                    .ok_or_else(|| ModelError::Checkpoint(format!("missing noise table {l}")))?;
                noise.push(t.to_mat());
            }
            m = m.with_noise(noise)?;
            load_params(m.params_mut(), &mut tensors)?;
            m.finalize();
            StoredModel::Mhn(m)
        }
        ModelSpec::Dnn { config, output_ids } => {
            let mut m = DnnModel::with_outputs(config.clone(), featurizer, templates.len(), output_ids.clone(), meta.seed)?;
            load_params(m.params_mut(), &mut tensors)?;
            StoredModel::Dnn(m)
        }
    };
    if let Some(name) = tensors.keys().next() {
        return Err(ModelError::Checkpoint(format!("unexpected tensor {name}")));
    }
    Ok(Checkpoint { meta, model, templates })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    checkpoint_from_bytes(&bytes)
}


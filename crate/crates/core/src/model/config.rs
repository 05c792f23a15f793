//! Model hyperparameters. Defaults follow the selected template-relevance
//! configuration; [`MhnConfig::retrosynthesis`] gives the two-layer
//! stacked variant.

use serde::{Deserialize, Serialize};

use crate::fingerprints::MxfpConfig;
use crate::numkernel::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoleculeFpKind {
    Morgan,
    Mxfp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoleculeFpConfig {
    pub kind: MoleculeFpKind,
    /// Folded length for Morgan and path fingerprints.
    pub size: usize,
    pub radius: usize,
    /// Counted Morgan values are `log(1 + count)`; binary values are 0/1.
    pub counted: bool,
    pub mxfp: MxfpConfig,
}

impl Default for MoleculeFpConfig {
    fn default() -> Self {
        MoleculeFpConfig { kind: MoleculeFpKind::Morgan, size: 4096, radius: 2, counted: false, mxfp: MxfpConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFpKind {
    /// Morgan environments of the patterns, folded to the molecule size.
    Morgan,
    /// Path labels of the patterns, folded to the molecule size.
    Path,
    /// The molecule MxFP selector applied to the patterns.
    Mxfp,
    /// Indicator of the template id; no structural information.
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactantPooling {
    /// Binary fingerprints; reactants combined by disjunction.
    Or,
    Max,
    Sum,
    Mean,
    Lgamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateFpConfig {
    pub kind: TemplateFpKind,
    pub pooling: ReactantPooling,
    /// Templates with at least this many training reactions get a fixed
    /// random embedding added; -1 disables the noise.
    pub noise_threshold: i64,
    /// Noise standard deviation per element, as a fraction of the mean
    /// template-fingerprint norm divided by the square root of its length.
    pub noise_scale: f64,
}

impl Default for TemplateFpConfig {
    fn default() -> Self {
        TemplateFpConfig { kind: TemplateFpKind::Path, pooling: ReactantPooling::Or, noise_threshold: 2, noise_scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Hidden layer widths; empty means the fingerprint passes through.
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { layers: Vec::new(), activation: Activation::Identity, dropout: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerPooling {
    Mean,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfieldConfig {
    /// Association space dimension.
    pub d: usize,
    pub beta: f64,
    pub heads: usize,
    pub num_layers: usize,
    /// Layer normalization of the encoder outputs before projection.
    pub normalize_input: bool,
    /// Layer normalization of the projections (state and stored patterns).
    pub normalize_projection: bool,
    pub association_activation: Activation,
    pub n_updates: usize,
    pub layer_pooling: LayerPooling,
    pub dropout: f64,
}

impl Default for HopfieldConfig {
    fn default() -> Self {
        HopfieldConfig {
            d: 1024,
            beta: 0.03,
            heads: 1,
            num_layers: 1,
            normalize_input: false,
            normalize_projection: true,
            association_activation: Activation::Identity,
            n_updates: 1,
            layer_pooling: LayerPooling::Learned,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MhnConfig {
    pub molecule_fp: MoleculeFpConfig,
    pub molecule_encoder: EncoderConfig,
    /// One entry per stacked layer; a single entry is shared by all layers.
    pub template_fps: Vec<TemplateFpConfig>,
    pub template_encoder: EncoderConfig,
    pub hopfield: HopfieldConfig,
}

impl Default for MhnConfig {
    fn default() -> Self {
        MhnConfig {
            molecule_fp: MoleculeFpConfig::default(),
            molecule_encoder: EncoderConfig::default(),
            template_fps: vec![TemplateFpConfig::default()],
            template_encoder: EncoderConfig::default(),
            hopfield: HopfieldConfig::default(),
        }
    }
}

impl MhnConfig {
    /// Two stacked layers: counted MxFP templates with lgamma-pooled
    /// reactants and no noise, then binary path templates with noise.
    pub fn retrosynthesis() -> Self {
        MhnConfig {
            molecule_fp: MoleculeFpConfig { kind: MoleculeFpKind::Mxfp, ..Default::default() },
            template_fps: vec![
                TemplateFpConfig { kind: TemplateFpKind::Mxfp, pooling: ReactantPooling::Lgamma, noise_threshold: -1, noise_scale: 0.1 },
                TemplateFpConfig { kind: TemplateFpKind::Path, pooling: ReactantPooling::Or, noise_threshold: 2, noise_scale: 0.1 },
            ],
            hopfield: HopfieldConfig { num_layers: 2, normalize_input: true, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn template_fp(&self, layer: usize) -> &TemplateFpConfig {
        self.template_fps.get(layer).unwrap_or(&self.template_fps[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnnConfig {
    pub molecule_fp: MoleculeFpConfig,
    pub encoder: EncoderConfig,
}

impl Default for DnnConfig {
    fn default() -> Self {
        DnnConfig {
            molecule_fp: MoleculeFpConfig::default(),
            encoder: EncoderConfig { layers: vec![2048], activation: Activation::Relu, dropout: 0.15 },
        }
    }
}

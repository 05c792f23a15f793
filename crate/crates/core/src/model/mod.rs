//! Template-relevance models: the modern Hopfield network, the feed-forward
//! baseline, template fingerprints, losses, training and checkpoints.

mod checkpoint;
mod config;
mod dnn;
mod encoder;
mod featurize;
mod hopfield;
mod mhn;
mod train;

use thiserror::Error;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, ModelSpec, StoredModel,
    StoredTemplate,
};
pub use config::{
    DnnConfig, EncoderConfig, HopfieldConfig, LayerPooling, MhnConfig, MoleculeFpConfig, MoleculeFpKind, ReactantPooling,
    TemplateFpConfig, TemplateFpKind,
};
pub use dnn::DnnModel;
pub use featurize::{combine_sides, lgamma_pool, noise_sigma, template_noise, Featurizer};
pub use hopfield::{dnn_baseline_forward, hopfield_energy, hopfield_update, loss_ce, loss_infonce, loss_label_retrieval};
pub use mhn::MhnModel;
pub use train::{pretrain_applicability, train, validate, EpochStats, Selection, TrainConfig, TrainData, TrainReport};

use crate::fingerprints::FingerprintError;
use crate::numkernel::{Mat, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("template memory has not been built; call build_memory first")]
    MemoryNotBuilt,
    #[error("label {label} out of range for {n} templates")]
    LabelOutOfRange { label: usize, n: usize },
    #[error("label matrix has no positive entry")]
    AllZeroLabels,
    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,
    #[error("negative count in lgamma pooling")]
    NegativeCount,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no usable training examples")]
    NoTrainingData,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// What training, pretraining and evaluation need from a model.
pub trait Trainable: Send + Sync {
    fn params(&self) -> &ParamStore;
    /// Mutable parameters; invalidates any cached inference state.
    fn params_mut(&mut self) -> &mut ParamStore;
    fn featurizer(&self) -> &Featurizer;
    fn num_templates(&self) -> usize;
    /// Output column of a template id, or `None` if the model cannot score it.
    fn output_index(&self, template: usize) -> Option<usize>;
    /// Probabilities over output columns (`B x outputs`) in training mode.
    fn probabilities(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var;
    /// Unnormalized per-output scores for the applicability objective.
    fn logits(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var;
    /// Prepares for inference (e.g. encodes the template memory).
    fn finalize(&mut self);
    /// Scores over all templates (`B x K`); `-inf` marks templates the model
    /// cannot score.
    fn score_fps(&self, fps: &Mat) -> Result<Mat, ModelError>;
}

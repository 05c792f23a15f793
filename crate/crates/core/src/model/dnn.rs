//! Feed-forward baseline: molecule encoder plus a linear layer over the
//! templates seen in training. Other templates have no output unit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DnnConfig;
use super::encoder::{init_linear, Encoder};
use super::featurize::Featurizer;
use super::{ModelError, Trainable};
use crate::chemgraph::{Molecule, ReactionTemplate};
use crate::numkernel::{DropoutMode, Mat, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone)]
pub struct DnnModel {
    cfg: DnnConfig,
    seed: u64,
    featurizer: Featurizer,
    n_templates: usize,
    /// Template id of each output unit, ascending.
    output_ids: Vec<usize>,
    output_of: Vec<Option<usize>>,
    params: ParamStore,
    encoder: Encoder,
    out: (ParamId, ParamId),
}

impl DnnModel {
    /// One output per template with a nonzero training count.
    pub fn new(cfg: DnnConfig, featurizer: Featurizer, templates: &[ReactionTemplate], seed: u64) -> Result<Self, ModelError> {
        let output_ids: Vec<usize> = templates.iter().filter(|t| t.train_count > 0).map(|t| t.id).collect();
        Self::with_outputs(cfg, featurizer, templates.len(), output_ids, seed)
    }

    pub fn with_outputs(
        cfg: DnnConfig,
        featurizer: Featurizer,
        n_templates: usize,
        output_ids: Vec<usize>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if output_ids.is_empty() {
            return Err(ModelError::NoTrainingData);
        }
        let mut output_of = vec![None; n_templates];
        for (o, &id) in output_ids.iter().enumerate() {
            if id >= n_templates || output_of[id].is_some() {
                return Err(ModelError::Config(format!("invalid output template id {id}")));
            }
            output_of[id] = Some(o);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut params, &mut rng, "mol_enc", &cfg.encoder, featurizer.dim());
        let out = init_linear(&mut params, &mut rng, "out", output_ids.len(), encoder.out_dim);
        Ok(DnnModel { cfg, seed, featurizer, n_templates, output_ids, output_of, params, encoder, out })
    }

    pub fn config(&self) -> &DnnConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_ids(&self) -> &[usize] {
        &self.output_ids
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.id(name)
    }

    fn output_logits(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var {
        let h = self.encoder.forward(tape, store, &self.cfg.encoder, fps, 0);
        let (w, b) = (tape.param(store, self.out.0), tape.param(store, self.out.1));
        let z = tape.matmul_t(h, w);
        tape.add_row(z, b)
    }

    /// Scores over all templates; templates without an output unit get
    /// `-inf` (no score).
    pub fn score_fps(&self, fps: &Mat) -> Result<Mat, ModelError> {
        let mut tape = Tape::new(DropoutMode::Off);
        let x = tape.input(fps.clone());
        let z = self.output_logits(&mut tape, &self.params, x);
        let p = tape.softmax_rows(z, 1.0);
        let pm = tape.value(p);
        let mut out = Mat::from_vec(pm.rows, self.n_templates, vec![f64::NEG_INFINITY; pm.rows * self.n_templates]);
        for r in 0..pm.rows {
            for (o, &id) in self.output_ids.iter().enumerate() {
                out.set(r, id, pm.get(r, o));
            }
        }
        Ok(out)
    }

    pub fn forward(&self, mol: &Molecule) -> Result<Vec<f64>, ModelError> {
        Ok(self.score_fps(&Mat::row_vector(&self.featurizer.molecule(mol)))?.data)
    }
}

impl Trainable for DnnModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    fn num_templates(&self) -> usize {
        self.n_templates
    }

    fn output_index(&self, template: usize) -> Option<usize> {
        self.output_of.get(template).copied().flatten()
    }

    fn probabilities(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var {
        let z = self.output_logits(tape, store, fps);
        tape.softmax_rows(z, 1.0)
    }

    fn logits(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var {
        self.output_logits(tape, store, fps)
    }

    fn finalize(&mut self) {}

    fn score_fps(&self, fps: &Mat) -> Result<Mat, ModelError> {
        DnnModel::score_fps(self, fps)
    }
}

//! The modern Hopfield network template-relevance model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::MhnConfig;
use super::encoder::{init_layernorm, init_weight, Encoder};
use super::featurize::Featurizer;
use super::{ModelError, Trainable};
use crate::chemgraph::{Molecule, ReactionTemplate};
use crate::numkernel::{DropoutMode, Mat, ParamId, ParamStore, Tape, Tensor2, Var, LAYERNORM_EPS};

#[derive(Debug, Clone, PartialEq)]
struct LayerParams {
    wm: ParamId,
    wt: ParamId,
    ln_in_m: Option<(ParamId, ParamId)>,
    ln_in_t: Option<(ParamId, ParamId)>,
    ln_proj_m: Option<(ParamId, ParamId)>,
    ln_proj_t: Option<(ParamId, ParamId)>,
}

/// Outputs of one forward pass on a tape.
pub(crate) struct MhnOutputs {
    /// Pooled association vector, `B x K`.
    pub p: Var,
    /// Last layer's `β ξ X^T` scores, head-averaged.
    pub logits: Var,
    /// Per-layer association vectors.
    pub layer_p: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct MhnModel {
    cfg: MhnConfig,
    seed: u64,
    featurizer: Featurizer,
    templates: Vec<ReactionTemplate>,
    /// Per layer: template fingerprints (`K x f`) including noise.
    template_inputs: Vec<Mat>,
    /// Per layer: the frozen noise part of `template_inputs`.
    template_noise: Vec<Mat>,
    params: ParamStore,
    mol_encoder: Encoder,
    template_encoders: Vec<Encoder>,
    layers: Vec<LayerParams>,
    pool_weights: Option<ParamId>,
    memory: Option<Vec<Mat>>,
}

impl MhnModel {
    pub fn new(cfg: MhnConfig, featurizer: Featurizer, templates: Vec<ReactionTemplate>, seed: u64) -> Result<Self, ModelError> {
        let h = &cfg.hopfield;
        if h.num_layers == 0 || h.heads == 0 || h.d == 0 || h.d % h.heads != 0 {
            return Err(ModelError::Config(format!(
                "need num_layers >= 1 and heads dividing d (d = {}, heads = {}, layers = {})",
                h.d, h.heads, h.num_layers
            )));
        }
        if h.beta <= 0.0 || !h.beta.is_finite() {
            return Err(ModelError::Config("beta must be positive".into()));
        }
        if cfg.template_fps.is_empty() {
            return Err(ModelError::Config("at least one template fingerprint configuration is required".into()));
        }
        if templates.is_empty() {
            return Err(ModelError::Config("the template set is empty".into()));
        }
        if templates.iter().enumerate().any(|(i, t)| t.id != i) {
            return Err(ModelError::Config("template ids must be dense and ordered".into()));
        }

        let mut template_inputs = Vec::new();
        let mut template_noise = Vec::new();
        for l in 0..h.num_layers {
            let tcfg = cfg.template_fp(l);
            let (input, noise) = template_input(&featurizer, &templates, tcfg, seed.wrapping_add(l as u64), None);
            template_inputs.push(input);
            template_noise.push(noise);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mol_encoder = Encoder::new(&mut params, &mut rng, "mol_enc", &cfg.molecule_encoder, featurizer.dim());
        let mut template_encoders = Vec::new();
        let mut layers = Vec::new();
        let mut state_dim = mol_encoder.out_dim;
        for (l, input) in template_inputs.iter().enumerate() {
            let enc = Encoder::new(&mut params, &mut rng, &format!("tmpl_enc.{l}"), &cfg.template_encoder, input.cols);
            let dt = enc.out_dim;
            let norm_in = h.normalize_input;
            let norm_proj = h.normalize_projection;
            let layer = LayerParams {
                ln_in_m: norm_in.then(|| init_layernorm(&mut params, &format!("hop.{l}.ln_in_m"), state_dim)),
                ln_in_t: norm_in.then(|| init_layernorm(&mut params, &format!("hop.{l}.ln_in_t"), dt)),
                wm: init_weight(&mut params, &mut rng, &format!("hop.{l}.wm"), h.d, state_dim),
                wt: init_weight(&mut params, &mut rng, &format!("hop.{l}.wt"), h.d, dt),
                ln_proj_m: norm_proj.then(|| init_layernorm(&mut params, &format!("hop.{l}.ln_proj_m"), h.d)),
                ln_proj_t: norm_proj.then(|| init_layernorm(&mut params, &format!("hop.{l}.ln_proj_t"), h.d)),
            };
            template_encoders.push(enc);
            layers.push(layer);
            state_dim = h.d;
        }
        let pool_weights = (h.num_layers > 1 && h.layer_pooling == super::config::LayerPooling::Learned)
            .then(|| params.add("pool.w", Tensor2::zeros(1, h.num_layers)));
        Ok(MhnModel {
            cfg,
            seed,
            featurizer,
            templates,
            template_inputs,
            template_noise,
            params,
            mol_encoder,
            template_encoders,
            layers,
            pool_weights,
            memory: None,
        })
    }

    /// Rebuilds the model around stored noise tables (checkpoint loading).
    pub(crate) fn with_noise(mut self, noise: Vec<Mat>) -> Result<Self, ModelError> {
        if noise.len() != self.template_noise.len() {
            return Err(ModelError::Checkpoint("noise table count differs from layer count".into()));
        }
        for (l, n) in noise.into_iter().enumerate() {
            let (input, noise) = template_input(&self.featurizer, &self.templates, self.cfg.template_fp(l), 0, Some(n));
            if input.shape() != self.template_inputs[l].shape() {
                return Err(ModelError::Checkpoint("noise table shape mismatch".into()));
            }
            self.template_inputs[l] = input;
            self.template_noise[l] = noise;
        }
        self.memory = None;
        Ok(self)
    }

    pub fn config(&self) -> &MhnConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn templates(&self) -> &[ReactionTemplate] {
        &self.templates
    }

    pub fn template_inputs(&self) -> &[Mat] {
        &self.template_inputs
    }

    pub fn template_noise(&self) -> &[Mat] {
        &self.template_noise
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.id(name)
    }

    /// Mutable parameters; invalidates the cached memory.
    pub fn params_mut_raw(&mut self) -> &mut ParamStore {
        self.memory = None;
        &mut self.params
    }

    fn layernorm(tape: &mut Tape, store: &ParamStore, x: Var, ln: Option<(ParamId, ParamId)>) -> Var {
        match ln {
            Some((g, b)) => {
                let (g, b) = (tape.param(store, g), tape.param(store, b));
                tape.layernorm(x, Some(g), Some(b), LAYERNORM_EPS)
            }
            None => x,
        }
    }

    /// Stored patterns `X` (`K x d`) of layer `l` on the tape.
    fn stored_patterns(&self, tape: &mut Tape, store: &ParamStore, l: usize) -> Var {
        let h = &self.cfg.hopfield;
        let lp = &self.layers[l];
        let input = tape.input(self.template_inputs[l].clone());
        let th = self.template_encoders[l].forward(tape, store, &self.cfg.template_encoder, input, 100 + 10 * l as u64);
        let th = Self::layernorm(tape, store, th, lp.ln_in_t);
        let wt = tape.param(store, lp.wt);
        let x = tape.matmul_t(th, wt);
        let x = Self::layernorm(tape, store, x, lp.ln_proj_t);
        let x = tape.activation(x, h.association_activation);
        tape.dropout(x, h.dropout, 201 + 2 * l as u64)
    }

    pub(crate) fn forward_tape(&self, tape: &mut Tape, store: &ParamStore, fps: Var, memory: Option<&[Mat]>) -> MhnOutputs {
        let h = &self.cfg.hopfield;
        let mut state = self.mol_encoder.forward(tape, store, &self.cfg.molecule_encoder, fps, 0);
        let mut layer_p = Vec::new();
        let mut logits = state;
        for (l, lp) in self.layers.iter().enumerate() {
            let x = match memory {
                Some(m) => tape.input(m[l].clone()),
                None => self.stored_patterns(tape, store, l),
            };
            let s = Self::layernorm(tape, store, state, lp.ln_in_m);
            let wm = tape.param(store, lp.wm);
            let xi = tape.matmul_t(s, wm);
            let xi = Self::layernorm(tape, store, xi, lp.ln_proj_m);
            let xi = tape.activation(xi, h.association_activation);
            let xi = tape.dropout(xi, h.dropout, 200 + 2 * l as u64);

            let dh = h.d / h.heads;
            let mut head_p = Vec::new();
            let mut head_new = Vec::new();
            let mut head_logits = Vec::new();
            for head in 0..h.heads {
                let (mut q, xh) = if h.heads == 1 {
                    (xi, x)
                } else {
                    (tape.slice_cols(xi, head * dh, dh), tape.slice_cols(x, head * dh, dh))
                };
                let mut p = q;
                let mut scores = q;
                for _ in 0..h.n_updates.max(1) {
                    scores = tape.matmul_t(q, xh);
                    p = tape.softmax_rows(scores, h.beta);
                    q = tape.matmul(p, xh);
                }
                head_logits.push(tape.scale(scores, h.beta));
                head_p.push(p);
                head_new.push(q);
            }
            let xi_new = if h.heads == 1 { head_new[0] } else { tape.concat_cols(&head_new) };
            layer_p.push(tape.mean(&head_p));
            logits = tape.mean(&head_logits);
            state = tape.add(xi_new, xi);
        }
        let p = if layer_p.len() == 1 {
            layer_p[0]
        } else {
            match self.pool_weights {
                Some(w) => {
                    let w = tape.param(store, w);
                    let w = tape.softmax_rows(w, 1.0);
                    tape.weighted_sum(&layer_p, w)
                }
                None => tape.mean(&layer_p),
            }
        };
        MhnOutputs { p, logits, layer_p }
    }

    /// Encodes every template into the stored patterns of each layer.
    pub fn build_memory(&mut self) {
        let mut tape = Tape::new(DropoutMode::Off);
        let memory = (0..self.layers.len())
            .map(|l| {
                let x = self.stored_patterns(&mut tape, &self.params, l);
                tape.value(x).clone()
            })
            .collect();
        self.memory = Some(memory);
    }

    pub fn memory(&self) -> Result<&[Mat], ModelError> {
        self.memory.as_deref().ok_or(ModelError::MemoryNotBuilt)
    }

    /// Association vectors (`B x K`) for fingerprint rows.
    pub fn score_fps(&self, fps: &Mat) -> Result<Mat, ModelError> {
        let memory = self.memory()?;
        let mut tape = Tape::new(DropoutMode::Off);
        let x = tape.input(fps.clone());
        let out = self.forward_tape(&mut tape, &self.params, x, Some(memory));
        Ok(tape.value(out.p).clone())
    }

    /// Per-layer association vectors, for inspection.
    pub fn layer_scores(&self, fps: &Mat) -> Result<Vec<Mat>, ModelError> {
        let memory = self.memory()?;
        let mut tape = Tape::new(DropoutMode::Off);
        let x = tape.input(fps.clone());
        let out = self.forward_tape(&mut tape, &self.params, x, Some(memory));
        Ok(out.layer_p.iter().map(|&v| tape.value(v).clone()).collect())
    }

    pub fn forward(&self, mol: &Molecule) -> Result<Vec<f64>, ModelError> {
        let fp = Mat::row_vector(&self.featurizer.molecule(mol));
        Ok(self.score_fps(&fp)?.data)
    }

    /// Molecule-encoder output `h^m(m)` for fingerprint rows.
    pub fn encode_molecules(&self, fps: &Mat) -> Mat {
        let mut tape = Tape::new(DropoutMode::Off);
        let x = tape.input(fps.clone());
        let h = self.mol_encoder.forward(&mut tape, &self.params, &self.cfg.molecule_encoder, x, 0);
        tape.value(h).clone()
    }

    /// Template-encoder output `T_h` (`K x d_t`) of layer `l`.
    pub fn encode_templates(&self, l: usize) -> Mat {
        let mut tape = Tape::new(DropoutMode::Off);
        let input = tape.input(self.template_inputs[l].clone());
        let th = self.template_encoders[l].forward(&mut tape, &self.params, &self.cfg.template_encoder, input, 0);
        tape.value(th).clone()
    }
}

fn template_input(
    featurizer: &Featurizer,
    templates: &[ReactionTemplate],
    cfg: &super::config::TemplateFpConfig,
    seed: u64,
    stored_noise: Option<Mat>,
) -> (Mat, Mat) {
    let base_cfg = super::config::TemplateFpConfig { noise_threshold: -1, ..cfg.clone() };
    let base = featurizer.template_matrix(templates, &base_cfg, 0);
    // Noise is rounded to f32 so that it round-trips through checkpoints.
    let noise = stored_noise.unwrap_or_else(|| {
        super::featurize::template_noise(templates, &base, cfg, seed).map(|v| v as f32 as f64)
    });
    let mut input = base;
    input.add_assign(&noise);
    (input, noise)
}

impl Trainable for MhnModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.memory = None;
        &mut self.params
    }

    fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    fn num_templates(&self) -> usize {
        self.templates.len()
    }

    fn output_index(&self, template: usize) -> Option<usize> {
        (template < self.templates.len()).then_some(template)
    }

    fn probabilities(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var {
        self.forward_tape(tape, store, fps, None).p
    }

    fn logits(&self, tape: &mut Tape, store: &ParamStore, fps: Var) -> Var {
        self.forward_tape(tape, store, fps, None).logits
    }

    fn finalize(&mut self) {
        self.build_memory();
    }

    fn score_fps(&self, fps: &Mat) -> Result<Mat, ModelError> {
        MhnModel::score_fps(self, fps)
    }
}

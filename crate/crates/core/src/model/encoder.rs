//! Fully connected encoder stacks shared by the MHN and the baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use crate::numkernel::{ParamId, ParamStore, Tape, Tensor2, Var};

/// Uniform(-1/√fan_in, 1/√fan_in) weights and biases.
pub(crate) fn init_linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, out: usize, fan_in: usize) -> (ParamId, ParamId) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Tensor2::from_vec(out, fan_in, (0..out * fan_in).map(|_| rng.random_range(-bound..bound) as f32).collect());
    let b = Tensor2::from_vec(1, out, (0..out).map(|_| rng.random_range(-bound..bound) as f32).collect());
    (store.add(format!("{name}.w"), w), store.add(format!("{name}.b"), b))
}

pub(crate) fn init_weight(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, out: usize, fan_in: usize) -> ParamId {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Tensor2::from_vec(out, fan_in, (0..out * fan_in).map(|_| rng.random_range(-bound..bound) as f32).collect());
    store.add(name.to_string(), w)
}

/// Layer-norm gain (ones) and bias (zeros).
pub(crate) fn init_layernorm(store: &mut ParamStore, name: &str, dim: usize) -> (ParamId, ParamId) {
    (store.add(format!("{name}.g"), Tensor2::filled(1, dim, 1.0)), store.add(format!("{name}.b"), Tensor2::zeros(1, dim)))
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Encoder {
    pub layers: Vec<(ParamId, ParamId)>,
    pub out_dim: usize,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cfg: &EncoderConfig, in_dim: usize) -> Self {
        let mut layers = Vec::new();
        let mut dim = in_dim;
        for (i, &width) in cfg.layers.iter().enumerate() {
            layers.push(init_linear(store, rng, &format!("{name}.{i}"), width, dim));
            dim = width;
        }
        Encoder { layers, out_dim: dim }
    }

    /// Affine → activation → dropout per layer.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, cfg: &EncoderConfig, x: Var, dropout_base: u64) -> Var {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (tape.param(store, w), tape.param(store, b));
            h = tape.matmul_t(h, w);
            h = tape.add_row(h, b);
            h = tape.activation(h, cfg.activation);
            h = tape.dropout(h, cfg.dropout, dropout_base + i as u64);
        }
        h
    }
}

//! Dense numeric kernel: f32 parameter storage, f64 computation, a small
//! reverse-mode tape, AdamW, and finite-difference gradient checks.

mod dropout;
mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use dropout::{dropout_mask, DropoutMode};
pub use gradcheck::{grad_check, GradCheckError, GradCheckOptions, GradCheckReport};
pub use ops::{layernorm, log_sum_exp, sigmoid, softmax, softplus, Activation, LAYERNORM_EPS};
pub use params::{adamw_step, AdamW, ParamId, ParamStore, ParamTensor};
pub use tape::{Gradients, Tape, Var, PROB_FLOOR};
pub use tensor::{Mat, Tensor2};

//! Central finite-difference verification of tape gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::params::ParamStore;
use super::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradCheckError {
    #[error("loss is not deterministic: {first} then {second} with identical parameters")]
    NonDeterministic { first: f64, second: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Coordinates sampled per parameter tensor (all if the tensor is smaller).
    pub coords_per_param: usize,
    pub seed: u64,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { h: 1e-5, coords_per_param: 16, seed: 0, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Compares analytic gradients of `loss_fn` with central differences.
///
/// Parameters are stored in f32, so the perturbed value `p ± h` is rounded;
/// the difference quotient divides by the actual f64 distance between the
/// two rounded values.
pub fn grad_check<F>(params: &mut ParamStore, mut loss_fn: F, opts: GradCheckOptions) -> Result<GradCheckReport, GradCheckError>
where
    F: FnMut(&ParamStore) -> (Tape, Var),
{
    let (tape, loss) = loss_fn(params);
    let first = tape.scalar(loss);
    let grads = tape.backward(loss);
    drop(tape);
    let second = {
        let (t, l) = loss_fn(params);
        t.scalar(l)
    };
    if first.to_bits() != second.to_bits() {
        return Err(GradCheckError::NonDeterministic { first, second });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_param: String::new(), worst_index: 0, coords_checked: 0 };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.value(id).as_slice().len();
        let analytic = grads.get(id);
        let coords: Vec<usize> = if n <= opts.coords_per_param {
            (0..n).collect()
        } else {
            let mut c = rand::seq::index::sample(&mut rng, n, opts.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let orig = params.value(id).as_slice()[idx];
            let plus = (orig as f64 + opts.h) as f32;
            let minus = (orig as f64 - opts.h) as f32;
            params.get_mut(id).value.as_mut_slice()[idx] = plus;
            let lp = {
                let (t, l) = loss_fn(params);
                t.scalar(l)
            };
            params.get_mut(id).value.as_mut_slice()[idx] = minus;
            let lm = {
                let (t, l) = loss_fn(params);
                t.scalar(l)
            };
            params.get_mut(id).value.as_mut_slice()[idx] = orig;
            let numeric = (lp - lm) / (plus as f64 - minus as f64);
            let a = analytic.map_or(0.0, |g| g.data[idx]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = params.get(id).name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}

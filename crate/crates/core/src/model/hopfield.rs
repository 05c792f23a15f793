//! The Hopfield update, its energy, and the standalone loss functions.
//!
//! Stored patterns are passed as a `K x d` matrix (one pattern per row).

use super::ModelError;
use crate::numkernel::{log_sum_exp, softmax, Mat};

/// `p = softmax(β X^T ξ)`, `ξ_new = X p`, iterated `n_updates` times.
pub fn hopfield_update(xi: &[f64], stored: &Mat, beta: f64, n_updates: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(xi.len(), stored.cols, "state dimension must match stored patterns");
    assert!(beta > 0.0, "beta must be positive");
    let mut state = xi.to_vec();
    let mut p = Vec::new();
    for _ in 0..n_updates.max(1) {
        let scores: Vec<f64> = (0..stored.rows).map(|k| dot(stored.row(k), &state)).collect();
        p = softmax(&scores, beta);
        let mut next = vec![0.0; stored.cols];
        for (k, pk) in p.iter().enumerate() {
            for (n, x) in next.iter_mut().zip(stored.row(k)) {
                *n += pk * x;
            }
        }
        state = next;
    }
    (state, p)
}

/// `E = −lse(β, X^T ξ) + ½ ξ^T ξ` with the constant fixed to zero.
pub fn hopfield_energy(xi: &[f64], stored: &Mat, beta: f64) -> f64 {
    let scaled: Vec<f64> = (0..stored.rows).map(|k| beta * dot(stored.row(k), xi)).collect();
    -log_sum_exp(&scaled) / beta + 0.5 * dot(xi, xi)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn loss_ce(p: &[f64], label: usize) -> Result<f64, ModelError> {
    let &pl = p.get(label).ok_or(ModelError::LabelOutOfRange { label, n: p.len() })?;
    Ok(-pl.ln())
}

/// `−log(1^T L p)` for a diagonal label matrix given by its diagonal.
pub fn loss_label_retrieval(p: &[f64], label_diag: &[f64]) -> Result<f64, ModelError> {
    if label_diag.len() != p.len() {
        return Err(ModelError::ShapeMismatch("label diagonal length differs from p".into()));
    }
    if label_diag.iter().all(|&l| l == 0.0) {
        return Err(ModelError::AllZeroLabels);
    }
    Ok(-p.iter().zip(label_diag).map(|(a, l)| a * l).sum::<f64>().ln())
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(ModelError::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}

/// InfoNCE on cosine similarities with temperature `tau`.
pub fn loss_infonce(
    xi_new: &[f64],
    pos: &[f64],
    negs: &[Vec<f64>],
    tau: f64,
    include_pos_in_denominator: bool,
) -> Result<f64, ModelError> {
    assert!(tau > 0.0, "tau must be positive");
    if negs.is_empty() {
        return Err(ModelError::ShapeMismatch("InfoNCE needs at least one negative".into()));
    }
    let s_pos = cosine(xi_new, pos)? / tau;
    let mut terms = negs.iter().map(|n| cosine(xi_new, n).map(|c| c / tau)).collect::<Result<Vec<_>, _>>()?;
    if include_pos_in_denominator {
        terms.push(s_pos);
    }
    Ok(log_sum_exp(&terms) - s_pos)
}

/// `softmax(W h)` over the output templates of a feed-forward baseline.
pub fn dnn_baseline_forward(w: &Mat, h_m: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols, h_m.len(), "weight columns must match the encoding");
    let logits: Vec<f64> = (0..w.rows).map(|k| dot(w.row(k), h_m)).collect();
    softmax(&logits, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn update_examples() {
        let x = Mat::from_rows(&[vec![0.3, -2.0]]);
        let (new, p) = hopfield_update(&[5.0, 1.0], &x, 1.0, 1);
        assert_eq!(p, vec![1.0]);
        assert_eq!(new, vec![0.3, -2.0]);

        let x = Mat::from_rows(&[e(0, 2), e(1, 2)]);
        let (new, p) = hopfield_update(&e(0, 2), &x, 1.0, 1);
        let a = std::f64::consts::E / (std::f64::consts::E + 1.0);
        assert!((p[0] - a).abs() < 1e-12 && (new[0] - a).abs() < 1e-12 && (new[1] - (1.0 - a)).abs() < 1e-12);
        let (new, _) = hopfield_update(&e(0, 2), &x, 100.0, 1);
        assert!((new[0] - 1.0).abs() < 1e-12 && new[1] < 1e-40);
    }

    #[test]
    fn energy_examples() {
        let x = Mat::from_rows(&[e(0, 3)]);
        assert!((hopfield_energy(&e(0, 3), &x, 1.0) + 0.5).abs() < 1e-12);
        let x = Mat::from_rows(&[e(0, 3), e(1, 3), vec![0.5, 0.5, 0.5], vec![1.0, -1.0, 2.0]]);
        assert!((hopfield_energy(&[0.0; 3], &x, 1.0) + 4f64.ln()).abs() < 1e-12);
        let xi = vec![0.2, -0.7, 0.4];
        let (new, _) = hopfield_update(&xi, &x, 1.0, 1);
        assert!(hopfield_energy(&new, &x, 1.0) <= hopfield_energy(&xi, &x, 1.0) + 1e-9);
    }

    #[test]
    fn losses() {
        assert_eq!(loss_ce(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((loss_ce(&[0.1; 10], 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((loss_ce(&[0.25, 0.75], 0).unwrap() - 1.386_294_361).abs() < 1e-8);
        assert!(matches!(loss_ce(&[1.0], 4), Err(ModelError::LabelOutOfRange { .. })));

        let p = [0.3, 0.3, 0.4];
        assert!((loss_label_retrieval(&p, &[1.0, 1.0, 0.0]).unwrap() - 0.6f64.ln().abs()).abs() < 1e-12);
        assert!(loss_label_retrieval(&p, &[1.0, 1.0, 1.0]).unwrap().abs() < 1e-12);
        assert_eq!(loss_label_retrieval(&p, &[0.0; 3]), Err(ModelError::AllZeroLabels));
    }

    #[test]
    fn infonce_examples() {
        let xi = e(0, 3);
        let negs = vec![e(1, 3), e(2, 3)];
        let neg_only = loss_infonce(&xi, &xi, &negs, 1.0, false).unwrap();
        assert!((neg_only - (2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((neg_only + 0.30685).abs() < 1e-5);
        let with_pos = loss_infonce(&xi, &xi, &negs, 1.0, true).unwrap();
        let e1 = std::f64::consts::E;
        assert!((with_pos + (e1 / (e1 + 2.0)).ln()).abs() < 1e-12);
        assert!((with_pos - 0.55144).abs() < 1e-5);
        assert_eq!(loss_infonce(&[0.0; 3], &xi, &negs, 1.0, true), Err(ModelError::ZeroNorm));
        // Identical positive and negatives: loss depends only on the shared cosine.
        let same = vec![vec![1.0, 1.0, 0.0]; 3];
        let a = loss_infonce(&[1.0, 0.0, 0.0], &same[0], &same, 0.5, true).unwrap();
        let b = loss_infonce(&[0.0, 1.0, 0.0], &same[0], &same, 0.5, true).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn dnn_identity() {
        let p = dnn_baseline_forward(&Mat::identity(4), &e(2, 4));
        let best = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(best, 2);
    }
}

//! Mini-batch AdamW training, applicability pretraining, and best-epoch
//! selection on the validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Trainable};
use crate::fingerprints::splitmix;
use crate::numkernel::{AdamW, DropoutMode, Mat, Tape, Tensor2};
use crate::screen::ApplicabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Minimum validation cross-entropy.
    ValLoss,
    /// Maximum validation top-1 accuracy.
    ValTop1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub pretrain_epochs: usize,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 1024, lr: 5e-4, weight_decay: 1e-2, pretrain_epochs: 0, selection: Selection::ValLoss }
    }
}

/// Fingerprint rows with their template labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub fps: Mat,
    pub labels: Vec<usize>,
}

impl TrainData {
    pub fn new(fps: Mat, labels: Vec<usize>) -> Self {
        assert_eq!(fps.rows, labels.len(), "one label per fingerprint row");
        TrainData { fps, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub(crate) fn select_rows(m: &Mat, rows: &[usize]) -> Mat {
    let mut out = Mat::zeros(rows.len(), m.cols);
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(m.row(r));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_top1: Option<f64>,
    pub val_top10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters the model holds after training.
    pub best_epoch: Option<usize>,
    pub pretrain_losses: Vec<f64>,
}

/// Validation loss and top-1/top-10 accuracy of the current parameters.
pub fn validate<M: Trainable + ?Sized>(model: &mut M, data: &TrainData) -> Result<(f64, f64, f64), ModelError> {
    model.finalize();
    let scores = model.score_fps(&data.fps)?;
    let mut loss = 0.0;
    let mut counted = 0usize;
    let (mut top1, mut top10) = (0usize, 0usize);
    for (r, &label) in data.labels.iter().enumerate() {
        let row = scores.row(r);
        let s = row[label];
        if s.is_finite() {
            loss -= s.max(crate::numkernel::PROB_FLOOR).ln();
            counted += 1;
            // Rank with ties broken by ascending id.
            let better = row.iter().enumerate().filter(|&(k, &v)| v > s || (v == s && k < label)).count();
            top1 += usize::from(better < 1);
            top10 += usize::from(better < 10);
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / counted.max(1) as f64, top1 as f64 / n, top10 as f64 / n))
}

fn snapshot<M: Trainable + ?Sized>(model: &M) -> Vec<Tensor2> {
    model.params().iter().map(|(_, p)| p.value.clone()).collect()
}

fn restore<M: Trainable + ?Sized>(model: &mut M, values: Vec<Tensor2>) {
    let store = model.params_mut();
    let ids: Vec<_> = store.ids().collect();
    for (id, v) in ids.into_iter().zip(values) {
        store.get_mut(id).value = v;
    }
}

/// Trains with the negative log-likelihood of the labeled template.
/// Deterministic for a fixed `seed`. The model ends up holding the
/// parameters of the best validation epoch.
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    train: &TrainData,
    valid: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, ModelError> {
    let usable: Vec<usize> = (0..train.len()).filter(|&i| model.output_index(train.labels[i]).is_some()).collect();
    if usable.is_empty() {
        return Err(ModelError::NoTrainingData);
    }
    let opt = AdamW { lr: cfg.lr, weight_decay: cfg.weight_decay, ..Default::default() };
    let batch_size = cfg.batch_size.max(1);
    let mut report = TrainReport { epochs: Vec::new(), best_epoch: None, pretrain_losses: Vec::new() };
    let mut best: Option<(f64, Vec<Tensor2>)> = None;

    for epoch in 0..cfg.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5eed) ^ epoch as u64));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let x = select_rows(&train.fps, chunk);
            let labels: Vec<Vec<usize>> =
                chunk.iter().map(|&i| vec![model.output_index(train.labels[i]).expect("filtered")]).collect();
            let mut tape = Tape::new(DropoutMode::Keyed { seed, epoch: epoch as u64, batch: b as u64 });
            let xv = tape.input(x);
            let p = model.probabilities(&mut tape, model.params(), xv);
            let loss = tape.label_mass_nll(p, labels);
            total += tape.scalar(loss) * chunk.len() as f64;
            let grads = tape.backward(loss);
            drop(tape);
            let store = model.params_mut();
            store.zero_grad();
            grads.accumulate_into(store);
            opt.step(store);
        }
        let mut stats = EpochStats { epoch, train_loss: total / usable.len() as f64, val_loss: None, val_top1: None, val_top10: None };
        if !valid.is_empty() {
            let (l, a1, a10) = validate(model, valid)?;
            stats.val_loss = Some(l);
            stats.val_top1 = Some(a1);
            stats.val_top10 = Some(a10);
            let score = match cfg.selection {
                Selection::ValLoss => l,
                Selection::ValTop1 => -a1,
            };
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, snapshot(model)));
                report.best_epoch = Some(epoch);
            }
        } else {
            report.best_epoch = Some(epoch);
        }
        report.epochs.push(stats);
    }
    if let Some((_, values)) = best {
        restore(model, values);
    }
    model.finalize();
    Ok(report)
}

/// Mean binary cross-entropy of per-template logits against the
/// applicability rows, for `cfg.pretrain_epochs` epochs.
pub fn pretrain_applicability<M: Trainable + ?Sized>(
    model: &mut M,
    fps: &Mat,
    applicability: &ApplicabilityMatrix,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    if applicability.n_cols() != model.num_templates() {
        return Err(ModelError::ShapeMismatch(format!(
            "applicability matrix has {} columns, model has {} templates",
            applicability.n_cols(),
            model.num_templates()
        )));
    }
    if applicability.n_rows() != fps.rows {
        return Err(ModelError::ShapeMismatch("one applicability row per fingerprint row is required".into()));
    }
    let opt = AdamW { lr: cfg.lr, weight_decay: cfg.weight_decay, ..Default::default() };
    let batch_size = cfg.batch_size.max(1);
    let mut losses = Vec::new();
    for epoch in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..fps.rows).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x9e7a) ^ epoch as u64));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let x = select_rows(fps, chunk);
            let positives: Vec<Vec<u32>> = chunk
                .iter()
                .map(|&i| {
                    applicability.row(i).iter().filter_map(|&k| model.output_index(k as usize).map(|o| o as u32)).collect()
                })
                .collect();
            let mut tape = Tape::new(DropoutMode::Keyed { seed: seed ^ 0x9e7a, epoch: epoch as u64, batch: b as u64 });
            let xv = tape.input(x);
            let z = model.logits(&mut tape, model.params(), xv);
            let loss = tape.bce_logits(z, positives);
            total += tape.scalar(loss) * chunk.len() as f64;
            let grads = tape.backward(loss);
            drop(tape);
            let store = model.params_mut();
            store.zero_grad();
            grads.accumulate_into(store);
            opt.step(store);
        }
        losses.push(total / fps.rows.max(1) as f64);
    }
    model.finalize();
    Ok(losses)
}

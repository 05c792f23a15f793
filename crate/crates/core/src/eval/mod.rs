//! Ranking metrics, popularity baselines, frequency-bucketed accuracy,
//! the inference pipeline and its benchmark.

mod bench;
mod export;
mod pipeline;

use std::collections::HashMap;

use thiserror::Error;

use crate::chemgraph::{subgraph_match, Molecule, ReactionTemplate};
use crate::data::ReactionRecord;
use crate::model::ModelError;
use crate::screen::{ScreenError, TemplateScreen};

pub use bench::{bench_csv, bench_inference, BenchOptions, BenchReport, BenchRow, PhaseTimes, DEFAULT_BUDGETS};
pub use export::{embeddings_text, export_embeddings, parse_embeddings};
pub use pipeline::{execute_ranking, predict, reactant_hits, reactant_topk, rank_batch, Execution, PredictOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no prediction for record {0}")]
    MissingPrediction(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Screen(#[from] ScreenError),
    #[error("{0}")]
    Io(String),
    #[error("malformed embeddings file: {0}")]
    Parse(String),
}

/// Template ids by descending score for one record, plus the reactant sets
/// produced by executing them (canonical keys), when execution was run.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPrediction {
    pub record_id: String,
    pub ranking: Vec<usize>,
    pub reactant_sets: Option<Vec<String>>,
}

/// Template ids by descending score, ties by ascending id. Non-finite
/// scores (templates the model cannot score) are left out.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).filter(|&k| scores[k].is_finite()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

fn by_record<'a>(predictions: &'a [RankedPrediction]) -> HashMap<&'a str, &'a RankedPrediction> {
    predictions.iter().map(|p| (p.record_id.as_str(), p)).collect()
}

/// Per-record hit flags: the true template within the first `k`.
pub fn template_hits(predictions: &[RankedPrediction], records: &[&ReactionRecord], k: usize) -> Result<Vec<bool>, EvalError> {
    let map = by_record(predictions);
    records
        .iter()
        .map(|r| {
            let p = map.get(r.id.as_str()).ok_or_else(|| EvalError::MissingPrediction(r.id.clone()))?;
            Ok(p.ranking.iter().take(k).any(|&t| t == r.template_id))
        })
        .collect()
}

/// Fraction of records whose template is among the first `k` predictions.
pub fn template_topk(predictions: &[RankedPrediction], records: &[&ReactionRecord], k: usize) -> Result<f64, EvalError> {
    let hits = template_hits(predictions, records, k)?;
    Ok(fraction(&hits))
}

fn fraction(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        0.0
    } else {
        hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
    }
}

/// Template ids by descending train count, ties by ascending id.
pub fn popularity_rank(train_counts: &[u32]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..train_counts.len()).collect();
    ids.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
    ids
}

/// The ranking restricted to templates passing the screen for `product`.
pub fn pop_fpf(ranking: &[usize], screen: &TemplateScreen, product: &Molecule) -> Vec<usize> {
    let mask = screen.mask(product);
    ranking.iter().copied().filter(|&k| mask[k]).collect()
}

/// The ranking restricted to exactly applicable templates. This uses the
/// applicability of the true answer, so it is an optimistic reference.
pub fn pop_app(ranking: &[usize], templates: &[ReactionTemplate], product: &Molecule) -> Vec<usize> {
    ranking.iter().copied().filter(|&k| subgraph_match(&templates[k].product_pattern, product).is_some()).collect()
}

const WILSON_Z: f64 = 1.959963984540054;

/// Wilson score interval (95%) for `hits` successes out of `n`.
pub fn wilson_interval(hits: usize, n: usize) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let (n, p, z2) = (n as f64, hits as f64 / n as f64, WILSON_Z * WILSON_Z);
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Some(((center - half).max(0.0), (center + half).min(1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketAccuracy {
    pub label: String,
    pub n: usize,
    pub hits: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

/// Top-k accuracy per bucket; `assignment[i]` is the bucket of `records[i]`.
pub fn bucketed_accuracy(
    predictions: &[RankedPrediction],
    records: &[&ReactionRecord],
    assignment: &[usize],
    labels: &[String],
    k: usize,
) -> Result<Vec<BucketAccuracy>, EvalError> {
    let hits = template_hits(predictions, records, k)?;
    let mut out: Vec<BucketAccuracy> =
        labels.iter().map(|l| BucketAccuracy { label: l.clone(), n: 0, hits: 0, accuracy: None, ci: None }).collect();
    for (&b, h) in assignment.iter().zip(hits) {
        out[b].n += 1;
        out[b].hits += usize::from(h);
    }
    for b in &mut out {
        if b.n > 0 {
            b.accuracy = Some(b.hits as f64 / b.n as f64);
            b.ci = wilson_interval(b.hits, b.n);
        }
    }
    Ok(out)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub k: usize,
    pub accuracy: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n: usize,
    pub bucket: String,
}

impl MetricRow {
    pub fn overall(method: &str, k: usize, hits: usize, n: usize) -> Self {
        MetricRow {
            method: method.to_string(),
            k,
            accuracy: (n > 0).then(|| hits as f64 / n as f64),
            ci: wilson_interval(hits, n),
            n,
            bucket: "all".into(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// CSV with columns method,k,accuracy,ci_low,ci_high,bucket. Values use
/// six decimals so repeated runs are byte-identical.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "k", "accuracy", "ci_low", "ci_high", "bucket"]).unwrap();
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.k.to_string(),
            fmt_opt(r.accuracy),
            fmt_opt(r.ci.map(|c| c.0)),
            fmt_opt(r.ci.map(|c| c.1)),
            r.bucket.clone(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

//! Inference: fingerprint, score, rank, optionally screen, execute.

use std::collections::HashSet;

use rayon::prelude::*;

use super::{by_record, fraction, rank_scores, EvalError, RankedPrediction};
use crate::chemgraph::{apply_template_with, ApplyOptions, Molecule, ReactantSet, ReactionTemplate};
use crate::data::ReactionRecord;
use crate::model::Trainable;
use crate::numkernel::Mat;
use crate::screen::TemplateScreen;

#[derive(Debug, Clone, Copy)]
pub struct PredictOptions<'a> {
    /// Rows per forward pass.
    pub batch_size: usize,
    /// When set, rankings drop templates that fail the screen.
    pub screen: Option<&'a TemplateScreen>,
    /// When set, templates are executed in ranking order until this many
    /// distinct reactant sets are collected.
    pub budget: Option<usize>,
}

impl Default for PredictOptions<'_> {
    fn default() -> Self {
        PredictOptions { batch_size: 256, screen: None, budget: None }
    }
}

/// Result of executing a ranking on one product.
#[derive(Debug, Clone, Default)]
pub struct Execution {
    /// Distinct reactant sets in the order they were produced.
    pub sets: Vec<ReactantSet>,
    /// Exact template applications performed.
    pub executed: usize,
}

/// Applies templates in ranking order, skipping those whose application
/// fails, until `budget` distinct reactant sets are collected. Sets from one
/// template come in canonical order.
pub fn execute_ranking(templates: &[ReactionTemplate], ranking: &[usize], product: &Molecule, budget: usize) -> Execution {
    let mut out = Execution::default();
    let mut seen = HashSet::new();
    let opts = ApplyOptions::default();
    for &k in ranking {
        if out.sets.len() >= budget {
            break;
        }
        out.executed += 1;
        for set in apply_template_with(&templates[k], product, &opts).reactant_sets {
            if out.sets.len() < budget && seen.insert(set.canonical().to_string()) {
                out.sets.push(set);
            }
        }
    }
    out
}

/// Rankings for a fingerprint matrix, one per row.
pub fn rank_batch(model: &dyn Trainable, fps: &Mat, batch_size: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    let batch_size = batch_size.max(1);
    let mut out = Vec::with_capacity(fps.rows);
    let mut start = 0;
    while start < fps.rows {
        let end = (start + batch_size).min(fps.rows);
        let rows = Mat::from_vec(end - start, fps.cols, fps.data[start * fps.cols..end * fps.cols].to_vec());
        let scores = model.score_fps(&rows)?;
        out.extend((0..scores.rows).map(|r| rank_scores(scores.row(r))));
        start = end;
    }
    Ok(out)
}

/// Ranks templates for every record's product and, with a budget, executes
/// them. The model must be finalized. Runs on the current rayon pool.
pub fn predict(
    model: &dyn Trainable,
    templates: &[ReactionTemplate],
    records: &[&ReactionRecord],
    opts: &PredictOptions,
) -> Result<Vec<RankedPrediction>, EvalError> {
    let products: Vec<&Molecule> = records.iter().map(|r| &r.product).collect();
    let fps = model.featurizer().molecules(&products);
    let mut rankings = rank_batch(model, &fps, opts.batch_size)?;
    if let Some(screen) = opts.screen {
        rankings.par_iter_mut().zip(products.par_iter()).for_each(|(ranking, product)| {
            let mask = screen.mask(product);
            ranking.retain(|&k| mask[k]);
        });
    }
    Ok(records
        .par_iter()
        .zip(rankings)
        .map(|(r, ranking)| {
            let reactant_sets = opts.budget.map(|budget| {
                execute_ranking(templates, &ranking, &r.product, budget).sets.iter().map(|s| s.canonical().to_string()).collect()
            });
            RankedPrediction { record_id: r.id.clone(), ranking, reactant_sets }
        })
        .collect())
}

/// Per-record flags: the recorded reactants are among the first `k` sets.
/// Predictions without executed sets count as misses.
pub fn reactant_hits(predictions: &[RankedPrediction], records: &[&ReactionRecord], k: usize) -> Result<Vec<bool>, EvalError> {
    let map = by_record(predictions);
    records
        .iter()
        .map(|r| {
            let p = map.get(r.id.as_str()).ok_or_else(|| EvalError::MissingPrediction(r.id.clone()))?;
            let key = r.reactant_key();
            Ok(p.reactant_sets.as_ref().is_some_and(|sets| sets.iter().take(k).any(|s| *s == key)))
        })
        .collect()
}

/// Reactant top-k accuracy of `model` executing up to `budget` sets.
pub fn reactant_topk(
    model: &dyn Trainable,
    templates: &[ReactionTemplate],
    records: &[&ReactionRecord],
    k: usize,
    budget: usize,
) -> Result<f64, EvalError> {
    let opts = PredictOptions { budget: Some(budget), ..Default::default() };
    let predictions = predict(model, templates, records, &opts)?;
    Ok(fraction(&reactant_hits(&predictions, records, k)?))
}

//! Throughput benchmark of the full inference pipeline per reactant-set
//! budget, with per-phase timings.

use std::time::Instant;

use rayon::prelude::*;

use super::pipeline::{execute_ranking, rank_batch};
use super::{fraction, EvalError};
use crate::chemgraph::{Molecule, ReactionTemplate};
use crate::data::ReactionRecord;
use crate::model::Trainable;
use crate::screen::TemplateScreen;

pub const DEFAULT_BUDGETS: [usize; 6] = [1, 3, 5, 10, 20, 50];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub budgets: Vec<usize>,
    pub workers: usize,
    /// Screen templates before execution.
    pub fpf: bool,
    pub screen_width: usize,
    /// Timed runs per budget (at least 3 are made).
    pub repeats: usize,
    /// Untimed runs before the first budget.
    pub warmup: usize,
    pub batch_size: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            budgets: DEFAULT_BUDGETS.to_vec(),
            workers: 1,
            fpf: true,
            screen_width: 2048,
            repeats: 3,
            warmup: 1,
            batch_size: 256,
        }
    }
}

/// Seconds spent in each phase of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub fingerprint: f64,
    pub forward: f64,
    pub fpf: f64,
    pub execution: f64,
}

impl PhaseTimes {
    pub fn sum(&self) -> f64 {
        self.fingerprint + self.forward + self.fpf + self.execution
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub budget: usize,
    pub k: usize,
    /// Reactant top-k accuracy.
    pub accuracy: f64,
    pub mols_per_sec: f64,
    /// Exact template applications over all products.
    pub executions: usize,
    /// Phases of the median run.
    pub phases: PhaseTimes,
    /// Wall time of the median run.
    pub wall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub fpf: bool,
    pub workers: usize,
    pub n_products: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Rows with `k == budget`, one per budget.
    pub fn curve(&self) -> Vec<&BenchRow> {
        self.rows.iter().filter(|r| r.k == r.budget).collect()
    }
}

struct Run {
    phases: PhaseTimes,
    wall: f64,
    executions: usize,
    sets: Vec<Vec<String>>,
}

fn run_once(
    model: &dyn Trainable,
    templates: &[ReactionTemplate],
    products: &[&Molecule],
    screen: Option<&TemplateScreen>,
    budget: usize,
    batch_size: usize,
) -> Result<Run, EvalError> {
    let mut phases = PhaseTimes::default();
    let start = Instant::now();

    let t = Instant::now();
    let fps = model.featurizer().molecules(products);
    phases.fingerprint = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut rankings = rank_batch(model, &fps, batch_size)?;
    phases.forward = t.elapsed().as_secs_f64();

    if let Some(screen) = screen {
        let t = Instant::now();
        rankings.par_iter_mut().zip(products.par_iter()).for_each(|(ranking, product)| {
            let mask = screen.mask(product);
            ranking.retain(|&k| mask[k]);
        });
        phases.fpf = t.elapsed().as_secs_f64();
    }

    let t = Instant::now();
    let executed: Vec<(usize, Vec<String>)> = products
        .par_iter()
        .zip(rankings.par_iter())
        .map(|(product, ranking)| {
            let ex = execute_ranking(templates, ranking, product, budget);
            (ex.executed, ex.sets.iter().map(|s| s.canonical().to_string()).collect())
        })
        .collect();
    phases.execution = t.elapsed().as_secs_f64();

    let wall = start.elapsed().as_secs_f64();
    let executions = executed.iter().map(|e| e.0).sum();
    Ok(Run { phases, wall, executions, sets: executed.into_iter().map(|e| e.1).collect() })
}

/// Measures end-to-end molecules per second for each budget on the
/// products of `records`, reporting the median of the timed runs. Rows are
/// emitted for every `k` in the budget list with `k <= budget`.
pub fn bench_inference(
    model: &dyn Trainable,
    templates: &[ReactionTemplate],
    records: &[&ReactionRecord],
    opts: &BenchOptions,
) -> Result<BenchReport, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| EvalError::Io(format!("thread pool: {e}")))?;
    let screen = if opts.fpf { Some(TemplateScreen::new(templates, opts.screen_width)?) } else { None };
    let products: Vec<&Molecule> = records.iter().map(|r| &r.product).collect();
    let keys: Vec<String> = records.iter().map(|r| r.reactant_key()).collect();
    let repeats = opts.repeats.max(3);
    let mut budgets = opts.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();

    pool.install(|| {
        if let Some(&first) = budgets.first() {
            for _ in 0..opts.warmup {
                run_once(model, templates, &products, screen.as_ref(), first, opts.batch_size)?;
            }
        }
        let mut rows = Vec::new();
        for &budget in &budgets {
            let mut runs = (0..repeats)
                .map(|_| run_once(model, templates, &products, screen.as_ref(), budget, opts.batch_size))
                .collect::<Result<Vec<_>, _>>()?;
            runs.sort_by(|a, b| a.wall.total_cmp(&b.wall));
            let median = &runs[runs.len() / 2];
            let mols_per_sec = products.len() as f64 / median.wall.max(f64::MIN_POSITIVE);
            for &k in budgets.iter().filter(|&&k| k <= budget) {
                let hits: Vec<bool> =
                    median.sets.iter().zip(&keys).map(|(sets, key)| sets.iter().take(k).any(|s| s == key)).collect();
                rows.push(BenchRow {
                    budget,
                    k,
                    accuracy: fraction(&hits),
                    mols_per_sec,
                    executions: median.executions,
                    phases: median.phases,
                    wall: median.wall,
                });
            }
        }
        Ok(BenchReport { fpf: opts.fpf, workers: opts.workers.max(1), n_products: products.len(), rows })
    })
}

/// CSV with columns budget,k,accuracy,mols_per_sec.
pub fn bench_csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["budget", "k", "accuracy", "mols_per_sec"]).unwrap();
    for r in &report.rows {
        w.write_record([r.budget.to_string(), r.k.to_string(), format!("{:.6}", r.accuracy), format!("{:.3}", r.mols_per_sec)])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

//! Fingerprint filter and applicability-matrix construction.
//!
//! The filter is a necessary condition for a template to apply: every path
//! bit of the template's product pattern must be present in the product.
//! Exact verification then runs only on the pairs that survive it.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::chemgraph::{subgraph_match, Molecule, ReactionTemplate};
use crate::fingerprints::{path_fp_with, BitFingerprint, FingerprintError, DEFAULT_MAX_PATH_BONDS, DEFAULT_SCREEN_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScreenError {
    #[error("fingerprint widths differ: template {template}, product {product}")]
    WidthMismatch { template: usize, product: usize },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("malformed applicability line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// True iff every bit set in `template_bits` is also set in `product_bits`.
pub fn fpf_check(template_bits: &BitFingerprint, product_bits: &BitFingerprint) -> Result<bool, ScreenError> {
    if template_bits.width() != product_bits.width() {
        return Err(ScreenError::WidthMismatch { template: template_bits.width(), product: product_bits.width() });
    }
    Ok(template_bits.words().iter().zip(product_bits.words()).all(|(t, p)| t & !p == 0))
}

/// Precomputed screen fingerprints of a template set's product patterns.
#[derive(Debug, Clone)]
pub struct TemplateScreen {
    bits: Vec<BitFingerprint>,
    width: usize,
    max_bonds: usize,
}

impl TemplateScreen {
    pub fn new(templates: &[ReactionTemplate], width: usize) -> Result<Self, ScreenError> {
        Self::with_max_bonds(templates, width, DEFAULT_MAX_PATH_BONDS)
    }

    pub fn with_max_bonds(templates: &[ReactionTemplate], width: usize, max_bonds: usize) -> Result<Self, ScreenError> {
        let bits = templates
            .par_iter()
            .map(|t| path_fp_with(&t.product_pattern, width, max_bonds))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TemplateScreen { bits, width, max_bonds })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn template_bits(&self, k: usize) -> &BitFingerprint {
        &self.bits[k]
    }

    pub fn molecule_bits(&self, mol: &Molecule) -> BitFingerprint {
        path_fp_with(mol, self.width, self.max_bonds).expect("width validated at construction")
    }

    /// Per-template pass flags for one molecule.
    pub fn mask(&self, mol: &Molecule) -> Vec<bool> {
        let mb = self.molecule_bits(mol);
        self.bits.iter().map(|t| fpf_check(t, &mb).expect("equal widths")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenMode {
    /// Fingerprint filter only; entries may be false positives.
    ScreenOnly,
    /// Filter, then exact matching on surviving pairs.
    ScreenThenExact,
    /// Exact matching on every pair.
    ExactOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub mode: ScreenMode,
    pub width: usize,
    pub max_path_bonds: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            mode: ScreenMode::ScreenThenExact,
            width: DEFAULT_SCREEN_WIDTH,
            max_path_bonds: DEFAULT_MAX_PATH_BONDS,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub molecules: usize,
    pub templates: usize,
    pub pairs_total: usize,
    pub pairs_screened: usize,
    pub pairs_passed_screen: usize,
    pub pairs_exact_checked: usize,
    pub true_entries: usize,
    /// Wall time of each phase.
    pub fingerprint_time: Duration,
    pub match_time: Duration,
    pub total_time: Duration,
}

impl BuildStats {
    pub fn screen_pass_rate(&self) -> f64 {
        if self.pairs_screened == 0 {
            0.0
        } else {
            self.pairs_passed_screen as f64 / self.pairs_screened as f64
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "molecules: {}", self.molecules);
        let _ = writeln!(s, "templates: {}", self.templates);
        let _ = writeln!(s, "pairs_total: {}", self.pairs_total);
        let _ = writeln!(s, "pairs_screened: {}", self.pairs_screened);
        let _ = writeln!(s, "pairs_passed_screen: {}", self.pairs_passed_screen);
        let _ = writeln!(s, "screen_pass_rate: {:.6}", self.screen_pass_rate());
        let _ = writeln!(s, "pairs_exact_checked: {}", self.pairs_exact_checked);
        let _ = writeln!(s, "true_entries: {}", self.true_entries);
        let _ = writeln!(s, "fingerprint_seconds: {:.6}", self.fingerprint_time.as_secs_f64());
        let _ = writeln!(s, "match_seconds: {:.6}", self.match_time.as_secs_f64());
        let _ = writeln!(s, "total_seconds: {:.6}", self.total_time.as_secs_f64());
        s
    }
}

/// Sparse boolean matrix, molecules x templates, stored as sorted column
/// lists per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplicabilityMatrix {
    rows: Vec<Vec<u32>>,
    n_templates: usize,
    pub stats: BuildStats,
}

impl ApplicabilityMatrix {
    pub fn from_rows(rows: Vec<Vec<u32>>, n_templates: usize) -> Self {
        let mut rows = rows;
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let true_entries = rows.iter().map(Vec::len).sum();
        let stats = BuildStats { molecules: rows.len(), templates: n_templates, true_entries, ..Default::default() };
        ApplicabilityMatrix { rows, n_templates, stats }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_templates
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.rows[i].binary_search(&(k as u32)).is_ok()
    }

    pub fn true_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `mol_index<TAB>comma-separated template ids`, one line per molecule.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            let ids: Vec<String> = r.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{i}\t{}", ids.join(","));
        }
        s
    }

    pub fn from_text(text: &str, n_templates: usize) -> Result<Self, ScreenError> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let err = |message: &str| ScreenError::Parse { line: ln + 1, message: message.to_string() };
            let (idx, ids) = line.split_once('\t').ok_or_else(|| err("expected a tab"))?;
            let idx: usize = idx.trim().parse().map_err(|_| err("bad molecule index"))?;
            if idx != rows.len() {
                return Err(err("molecule indices must be consecutive from 0"));
            }
            let mut row = Vec::new();
            for id in ids.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let k: u32 = id.parse().map_err(|_| err("bad template id"))?;
                if k as usize >= n_templates {
                    return Err(err("template id out of range"));
                }
                row.push(k);
            }
            rows.push(row);
        }
        Ok(Self::from_rows(rows, n_templates))
    }
}

/// Builds the matrix with the filter and, if `exact`, exact verification.
pub fn build_applicability_matrix(templates: &[ReactionTemplate], mols: &[Molecule], exact: bool) -> ApplicabilityMatrix {
    let mode = if exact { ScreenMode::ScreenThenExact } else { ScreenMode::ScreenOnly };
    build_applicability_matrix_with(templates, mols, &BuildOptions { mode, ..Default::default() })
        .expect("default width is valid")
}

pub fn build_applicability_matrix_with(
    templates: &[ReactionTemplate],
    mols: &[Molecule],
    opts: &BuildOptions,
) -> Result<ApplicabilityMatrix, ScreenError> {
    if opts.workers == 0 {
        return build_inner(templates, mols, opts);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| build_inner(templates, mols, opts))
}

struct RowResult {
    cols: Vec<u32>,
    passed: usize,
    exact_checked: usize,
}

fn build_inner(templates: &[ReactionTemplate], mols: &[Molecule], opts: &BuildOptions) -> Result<ApplicabilityMatrix, ScreenError> {
    let start = Instant::now();
    let use_screen = opts.mode != ScreenMode::ExactOnly;
    let (screen, mol_bits) = if use_screen {
        let screen = TemplateScreen::with_max_bonds(templates, opts.width, opts.max_path_bonds)?;
        let bits: Vec<BitFingerprint> = mols.par_iter().map(|m| screen.molecule_bits(m)).collect();
        (Some(screen), bits)
    } else {
        (None, Vec::new())
    };
    let fingerprint_time = start.elapsed();

    let match_start = Instant::now();
    let results: Vec<RowResult> = (0..mols.len())
        .into_par_iter()
        .map(|i| {
            let mut row = RowResult { cols: Vec::new(), passed: 0, exact_checked: 0 };
            for (k, t) in templates.iter().enumerate() {
                if let Some(screen) = &screen {
                    if !fpf_check(screen.template_bits(k), &mol_bits[i]).expect("equal widths") {
                        continue;
                    }
                    row.passed += 1;
                }
                let hit = match opts.mode {
                    ScreenMode::ScreenOnly => true,
                    _ => {
                        row.exact_checked += 1;
                        subgraph_match(&t.product_pattern, &mols[i]).is_some()
                    }
                };
                if hit {
                    row.cols.push(k as u32);
                }
            }
            row
        })
        .collect();
    let match_time = match_start.elapsed();

    let pairs_total = templates.len() * mols.len();
    let stats = BuildStats {
        molecules: mols.len(),
        templates: templates.len(),
        pairs_total,
        pairs_screened: if use_screen { pairs_total } else { 0 },
        pairs_passed_screen: results.iter().map(|r| r.passed).sum(),
        pairs_exact_checked: results.iter().map(|r| r.exact_checked).sum(),
        true_entries: results.iter().map(|r| r.cols.len()).sum(),
        fingerprint_time,
        match_time,
        total_time: start.elapsed(),
    };
    Ok(ApplicabilityMatrix { rows: results.into_iter().map(|r| r.cols).collect(), n_templates: templates.len(), stats })
}

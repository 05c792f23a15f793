//! Molecule and template fingerprints as model inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{MoleculeFpConfig, MoleculeFpKind, ReactantPooling, TemplateFpConfig, TemplateFpKind};
use super::ModelError;
use crate::chemgraph::{GraphView, Molecule, ReactionTemplate};
use crate::fingerprints::{morgan_fp, mxfp_build, path_counts, splitmix, MxfpSelector};
use crate::numkernel::Mat;

/// `log Γ(Σx + 2) − Σ log Γ(x_i + 1)` per feature over a set of count
/// vectors. A one-element set gives `log(1 + x)`.
pub fn lgamma_pool(columns: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let Some(first) = columns.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(ModelError::ShapeMismatch("lgamma pooling needs equal-length vectors".into()));
    }
    if columns.iter().flatten().any(|&x| x < 0.0) {
        return Err(ModelError::NegativeCount);
    }
    Ok((0..n)
        .map(|j| {
            let total: f64 = columns.iter().map(|c| c[j]).sum();
            libm::lgamma(total + 2.0) - columns.iter().map(|c| libm::lgamma(c[j] + 1.0)).sum::<f64>()
        })
        .collect())
}

/// Molecule fingerprint computation, including the MxFP feature selection
/// fitted on training products.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    cfg: MoleculeFpConfig,
    selector: Option<MxfpSelector>,
}

impl Featurizer {
    pub fn new(cfg: &MoleculeFpConfig, train_mols: &[Molecule]) -> Result<Self, ModelError> {
        let selector = match cfg.kind {
            MoleculeFpKind::Morgan => None,
            MoleculeFpKind::Mxfp => Some(mxfp_build(train_mols, &cfg.mxfp)?),
        };
        Ok(Featurizer { cfg: cfg.clone(), selector })
    }

    pub fn with_selector(cfg: &MoleculeFpConfig, selector: Option<MxfpSelector>) -> Result<Self, ModelError> {
        if (cfg.kind == MoleculeFpKind::Mxfp) != selector.is_some() {
            return Err(ModelError::ShapeMismatch("MxFP fingerprints need exactly one selector".into()));
        }
        Ok(Featurizer { cfg: cfg.clone(), selector })
    }

    pub fn config(&self) -> &MoleculeFpConfig {
        &self.cfg
    }

    pub fn selector(&self) -> Option<&MxfpSelector> {
        self.selector.as_ref()
    }

    pub fn dim(&self) -> usize {
        match &self.selector {
            Some(s) => s.len(),
            None => self.cfg.size,
        }
    }

    /// Raw (unscaled) counts at each fingerprint position.
    pub fn counts<G: GraphView>(&self, g: &G) -> Vec<f64> {
        match &self.selector {
            Some(s) => s.raw_counts(g),
            None => morgan_fp(g, self.cfg.radius, self.cfg.size, true).values,
        }
    }

    pub fn molecule<G: GraphView>(&self, g: &G) -> Vec<f64> {
        let counts = self.counts(g);
        if self.selector.is_some() || self.cfg.counted {
            counts.into_iter().map(f64::ln_1p).collect()
        } else {
            counts.into_iter().map(|c| if c > 0.0 { 1.0 } else { 0.0 }).collect()
        }
    }

    /// One row per molecule.
    pub fn molecules(&self, mols: &[&Molecule]) -> Mat {
        let rows: Vec<Vec<f64>> = mols.par_iter().map(|m| self.molecule(*m)).collect();
        let mut out = Mat::from_rows(&rows);
        out.cols = self.dim();
        out
    }

    /// Counts of a template pattern in the space of `kind`.
    fn pattern_counts<G: GraphView>(&self, g: &G, kind: TemplateFpKind) -> Vec<f64> {
        match kind {
            TemplateFpKind::Morgan => morgan_fp(g, self.cfg.radius, self.cfg.size, true).values,
            TemplateFpKind::Mxfp => match &self.selector {
                Some(s) => s.raw_counts(g),
                None => morgan_fp(g, self.cfg.radius, self.cfg.size, true).values,
            },
            TemplateFpKind::Path => {
                let mut v = vec![0.0; self.cfg.size];
                for (id, c) in path_counts(g, 7) {
                    v[(id % self.cfg.size as u64) as usize] += c as f64;
                }
                v
            }
            TemplateFpKind::OneHot => unreachable!("one-hot templates have no pattern counts"),
        }
    }

    pub fn template_dim(&self, kind: TemplateFpKind, n_templates: usize) -> usize {
        match kind {
            TemplateFpKind::OneHot => n_templates,
            TemplateFpKind::Mxfp if self.selector.is_some() => self.dim(),
            _ => self.cfg.size,
        }
    }

    /// Product side minus half the pooled reactant side, without noise.
    pub fn template_fingerprint(&self, t: &ReactionTemplate, cfg: &TemplateFpConfig, n_templates: usize) -> Vec<f64> {
        if cfg.kind == TemplateFpKind::OneHot {
            let mut v = vec![0.0; n_templates];
            v[t.id] = 1.0;
            return v;
        }
        let product = self.pattern_counts(&t.product_pattern, cfg.kind);
        let reactants: Vec<Vec<f64>> = t.reactant_patterns.iter().map(|r| self.pattern_counts(r, cfg.kind)).collect();
        let pooled = pool(&reactants, cfg.pooling, product.len());
        let product: Vec<f64> = match cfg.pooling {
            ReactantPooling::Or => product.iter().map(|&c| if c > 0.0 { 1.0 } else { 0.0 }).collect(),
            _ => product.iter().map(|&c| c.ln_1p()).collect(),
        };
        combine_sides(&product, &pooled)
    }

    /// All template fingerprints (rows, in template order) with the frozen
    /// random embedding added to frequent templates.
    pub fn template_matrix(&self, templates: &[ReactionTemplate], cfg: &TemplateFpConfig, seed: u64) -> Mat {
        let k = templates.len();
        let dim = self.template_dim(cfg.kind, k);
        let rows: Vec<Vec<f64>> = templates.par_iter().map(|t| self.template_fingerprint(t, cfg, k)).collect();
        let mut m = Mat::from_rows(&rows);
        m.cols = dim;
        let noise = template_noise(templates, &m, cfg, seed);
        m.add_assign(&noise);
        m
    }
}

/// Product side minus half of the pooled reactant side.
pub fn combine_sides(product: &[f64], pooled_reactants: &[f64]) -> Vec<f64> {
    product.iter().zip(pooled_reactants).map(|(p, r)| p - 0.5 * r).collect()
}

fn pool(reactants: &[Vec<f64>], mode: ReactantPooling, len: usize) -> Vec<f64> {
    if reactants.is_empty() {
        return vec![0.0; len];
    }
    let fold = |f: fn(f64, f64) -> f64| -> Vec<f64> {
        (0..len).map(|j| reactants.iter().map(|r| r[j]).fold(reactants[0][j], f)).collect()
    };
    match mode {
        ReactantPooling::Or => fold(f64::max).into_iter().map(|v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
        ReactantPooling::Max => fold(f64::max).into_iter().map(f64::ln_1p).collect(),
        ReactantPooling::Sum => {
            (0..len).map(|j| reactants.iter().map(|r| r[j]).sum::<f64>().ln_1p()).collect()
        }
        ReactantPooling::Mean => (0..len)
            .map(|j| (reactants.iter().map(|r| r[j]).sum::<f64>() / reactants.len() as f64).ln_1p())
            .collect(),
        ReactantPooling::Lgamma => lgamma_pool(reactants).expect("counts are non-negative"),
    }
}

/// Standard deviation of the per-element template noise.
pub fn noise_sigma(base: &Mat, scale: f64) -> f64 {
    if base.rows == 0 || base.cols == 0 {
        return 0.0;
    }
    let mean_norm = (0..base.rows).map(|r| base.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>()
        / base.rows as f64;
    scale * mean_norm / (base.cols as f64).sqrt()
}

/// Noise rows (zero for infrequent templates); a pure function of
/// (seed, template id) and the base fingerprints.
pub fn template_noise(templates: &[ReactionTemplate], base: &Mat, cfg: &TemplateFpConfig, seed: u64) -> Mat {
    let mut noise = Mat::zeros(base.rows, base.cols);
    if cfg.noise_threshold < 0 {
        return noise;
    }
    let sigma = noise_sigma(base, cfg.noise_scale);
    if sigma <= 0.0 {
        return noise;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for (r, t) in templates.iter().enumerate() {
        if (t.train_count as i64) < cfg.noise_threshold {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed) ^ splitmix(t.id as u64 ^ 0x7e3a_11c9));
        for v in noise.row_mut(r) {
            *v = normal.sample(&mut rng);
        }
    }
    noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::parse_template;

    #[test]
    fn lgamma_examples() {
        assert!(lgamma_pool(&[vec![0.0]]).unwrap()[0].abs() < 1e-15);
        assert!((lgamma_pool(&[vec![1.0], vec![1.0]]).unwrap()[0] - 6f64.ln()).abs() < 1e-12);
        assert!((lgamma_pool(&[vec![2.0], vec![0.0]]).unwrap()[0] - 3f64.ln()).abs() < 1e-12);
        assert!((lgamma_pool(&[vec![4.0]]).unwrap()[0] - 5f64.ln()).abs() < 1e-12);
        assert_eq!(lgamma_pool(&[vec![-1.0]]), Err(ModelError::NegativeCount));
    }

    #[test]
    fn combination_rule() {
        assert_eq!(combine_sides(&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]), vec![1.0, -0.5, 0.5]);
    }

    #[test]
    fn product_minus_half_reactants() {
        let cfg = MoleculeFpConfig { size: 64, radius: 1, ..Default::default() };
        let f = Featurizer::new(&cfg, &[]).unwrap();
        let t = parse_template("[C:1]=[O:2]>>[C:1][O:2]").unwrap();
        let tcfg = TemplateFpConfig { kind: TemplateFpKind::Morgan, pooling: ReactantPooling::Or, noise_threshold: -1, noise_scale: 0.1 };
        let fp = f.template_fingerprint(&t, &tcfg, 1);
        let prod = morgan_fp(&t.product_pattern, 1, 64, false).values;
        let reac = morgan_fp(&t.reactant_patterns[0], 1, 64, false).values;
        for j in 0..64 {
            assert_eq!(fp[j], prod[j] - 0.5 * reac[j]);
        }
    }

    #[test]
    fn noise_follows_threshold() {
        let cfg = MoleculeFpConfig { size: 128, radius: 1, ..Default::default() };
        let f = Featurizer::new(&cfg, &[]).unwrap();
        let t0 = parse_template("[C:1]=[O:2]>>[C:1][O:2]").unwrap().with_id(0).with_train_count(1);
        let t1 = parse_template("[C:1]=[O:2]>>[C:1][O:2]").unwrap().with_id(1).with_train_count(100);
        let templates = vec![t0, t1];
        let mut tcfg = TemplateFpConfig { kind: TemplateFpKind::Morgan, noise_threshold: 2, ..Default::default() };
        let m = f.template_matrix(&templates, &tcfg, 3);
        let base = f.template_fingerprint(&templates[0], &tcfg, 2);
        assert_eq!(m.row(0), &base[..]);
        assert_ne!(m.row(1), &base[..]);
        assert_eq!(m, f.template_matrix(&templates, &tcfg, 3));
        tcfg.noise_threshold = -1;
        let m = f.template_matrix(&templates, &tcfg, 3);
        assert_eq!(m.row(0), m.row(1));
    }
}

//! Mixed fingerprint: unfolded counted features from several families,
//! truncated per family to the highest-variance features of a training set.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{atom_pair_counts, morgan_counts, path_counts, DenseFingerprint, FingerprintError, FingerprintKind};
use crate::chemgraph::GraphView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Morgan,
    Path,
    AtomPair,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Morgan, Family::Path, Family::AtomPair];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MxfpConfig {
    pub morgan_radius: usize,
    pub path_max_bonds: usize,
    pub pair_max_distance: usize,
    pub morgan_len: usize,
    pub path_len: usize,
    pub pair_len: usize,
}

impl Default for MxfpConfig {
    fn default() -> Self {
        MxfpConfig {
            morgan_radius: 2,
            path_max_bonds: 7,
            pair_max_distance: 10,
            morgan_len: 2048,
            path_len: 1024,
            pair_len: 1024,
        }
    }
}

impl MxfpConfig {
    pub fn total_len(&self) -> usize {
        self.morgan_len + self.path_len + self.pair_len
    }

    fn target(&self, family: Family) -> usize {
        match family {
            Family::Morgan => self.morgan_len,
            Family::Path => self.path_len,
            Family::AtomPair => self.pair_len,
        }
    }

    fn counts<G: GraphView>(&self, family: Family, g: &G) -> BTreeMap<u64, u32> {
        match family {
            Family::Morgan => morgan_counts(g, self.morgan_radius),
            Family::Path => path_counts(g, self.path_max_bonds),
            Family::AtomPair => atom_pair_counts(g, self.pair_max_distance),
        }
    }
}

/// Retained features of one family, by descending train-set variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySelection {
    pub family: Family,
    pub target_len: usize,
    pub features: Vec<u64>,
    pub variances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SelectorData {
    config: MxfpConfig,
    families: Vec<FamilySelection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "SelectorData", into = "SelectorData")]
pub struct MxfpSelector {
    config: MxfpConfig,
    families: Vec<FamilySelection>,
    index: Vec<HashMap<u64, usize>>,
}

impl From<SelectorData> for MxfpSelector {
    fn from(d: SelectorData) -> Self {
        let index = d
            .families
            .iter()
            .map(|f| f.features.iter().enumerate().map(|(i, &id)| (id, i)).collect())
            .collect();
        MxfpSelector { config: d.config, families: d.families, index }
    }
}

impl From<MxfpSelector> for SelectorData {
    fn from(s: MxfpSelector) -> Self {
        SelectorData { config: s.config, families: s.families }
    }
}

impl PartialEq for MxfpSelector {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.families == other.families
    }
}

impl MxfpSelector {
    pub fn config(&self) -> &MxfpConfig {
        &self.config
    }

    pub fn families(&self) -> &[FamilySelection] {
        &self.families
    }

    /// Output length; always the configured total.
    pub fn len(&self) -> usize {
        self.families.iter().map(|f| f.target_len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw counts at the selected positions (unselected features dropped,
    /// unused slots zero).
    pub fn raw_counts<G: GraphView>(&self, g: &G) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut offset = 0;
        for (sel, index) in self.families.iter().zip(&self.index) {
            for (id, c) in self.config.counts(sel.family, g) {
                if let Some(&pos) = index.get(&id) {
                    out[offset + pos] = c as f64;
                }
            }
            offset += sel.target_len;
        }
        out
    }
}

/// Ranks every family's unfolded features by the variance of their
/// presence indicator over `train_mols` and keeps the top slice.
pub fn mxfp_build<G: GraphView + Sync>(train_mols: &[G], config: &MxfpConfig) -> Result<MxfpSelector, FingerprintError> {
    if train_mols.is_empty() {
        return Err(FingerprintError::NoMolecules);
    }
    let n = train_mols.len() as f64;
    let mut families = Vec::new();
    for family in Family::ALL {
        let target_len = config.target(family);
        if target_len == 0 {
            families.push(FamilySelection { family, target_len, features: vec![], variances: vec![] });
            continue;
        }
        let per_mol: Vec<Vec<u64>> = train_mols
            .par_iter()
            .map(|m| config.counts(family, m).into_keys().collect())
            .collect();
        let mut present: HashMap<u64, usize> = HashMap::new();
        for ids in &per_mol {
            for &id in ids {
                *present.entry(id).or_insert(0) += 1;
            }
        }
        if present.is_empty() {
            return Err(FingerprintError::EmptySelection(family));
        }
        let mut ranked: Vec<(f64, u64)> = present
            .into_iter()
            .map(|(id, k)| {
                let p = k as f64 / n;
                (p * (1.0 - p), id)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.truncate(target_len);
        families.push(FamilySelection {
            family,
            target_len,
            features: ranked.iter().map(|r| r.1).collect(),
            variances: ranked.iter().map(|r| r.0).collect(),
        });
    }
    Ok(MxfpSelector::from(SelectorData { config: config.clone(), families }))
}

/// Selected counts scaled by `log(1 + x)`.
pub fn mxfp_apply<G: GraphView>(selector: &MxfpSelector, g: &G) -> DenseFingerprint {
    DenseFingerprint {
        values: selector.raw_counts(g).into_iter().map(f64::ln_1p).collect(),
        kind: FingerprintKind::Mxfp,
        binary: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{parse_smiles, Molecule};

    fn mols(s: &[&str]) -> Vec<Molecule> {
        s.iter().map(|x| parse_smiles(x).unwrap()).collect()
    }

    fn small() -> MxfpConfig {
        MxfpConfig { morgan_len: 8, path_len: 8, pair_len: 8, ..Default::default() }
    }

    #[test]
    fn zero_variance_ranked_last() {
        // Every molecule has a carbon; the radius-0 aliphatic carbon of degree 1
        // is shared, so its variance is 0 and it sorts behind all others.
        let train = mols(&["CC", "CCO", "CCN", "CC=O"]);
        let sel = mxfp_build(&train, &MxfpConfig { morgan_len: 100, ..small() }).unwrap();
        let morgan = &sel.families()[0];
        assert!(morgan.variances.windows(2).all(|w| w[0] >= w[1]));
        let last = *morgan.variances.last().unwrap();
        assert_eq!(last, 0.0);
        assert!(morgan.variances[0] > 0.0);
    }

    #[test]
    fn scaling_and_length() {
        let train = mols(&["CCO", "c1ccccc1", "CC(=O)N"]);
        let sel = mxfp_build(&train, &small()).unwrap();
        assert_eq!(sel.len(), 24);
        for m in mols(&["C", "CCCCCCCC", "O=C=O"]) {
            assert_eq!(mxfp_apply(&sel, &m).len(), 24);
        }
        let raw = sel.raw_counts(&train[0]);
        let fp = mxfp_apply(&sel, &train[0]);
        for (r, v) in raw.iter().zip(&fp.values) {
            if *r == 0.0 {
                assert_eq!(*v, 0.0);
            }
            if *r == 1.0 {
                assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unseen_features_give_zero_vector() {
        let sel = mxfp_build(&mols(&["CC", "CCC"]), &small()).unwrap();
        let fp = mxfp_apply(&sel, &parse_smiles("[Na+].[Cl-]").unwrap());
        assert_eq!(fp.values, vec![0.0; 24]);
    }

    #[test]
    fn empty_family_is_an_error() {
        // Single atoms have no atom pairs.
        let err = mxfp_build(&mols(&["C", "O"]), &small()).unwrap_err();
        assert_eq!(err, FingerprintError::EmptySelection(Family::AtomPair));
        assert_eq!(mxfp_build::<Molecule>(&[], &small()).unwrap_err(), FingerprintError::NoMolecules);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let train = mols(&["CCO", "c1ccccc1O", "CC(=O)N"]);
        let sel = mxfp_build(&train, &small()).unwrap();
        let back: MxfpSelector = serde_json::from_str(&serde_json::to_string(&sel).unwrap()).unwrap();
        assert_eq!(back, sel);
        assert_eq!(mxfp_apply(&back, &train[1]), mxfp_apply(&sel, &train[1]));
    }
}

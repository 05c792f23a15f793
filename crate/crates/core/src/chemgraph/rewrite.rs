//! Template execution: replace a matched product substructure with the
//! template's reactant patterns, carrying unmatched atoms through.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::matcher::for_each_embedding;
use super::{Atom, Bond, BondOrder, GraphView, Molecule, ReactionTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("molecule atom {atom} stays attached to template atom map {map}, which the reactant side removes")]
    DetachedNeighbor { atom: usize, map: u32 },
    #[error("unmapped wildcard on the reactant side cannot be instantiated")]
    UnresolvedWildcard,
    #[error("rewrite produced an invalid graph: {0}")]
    InvalidGraph(String),
}

/// One predicted set of reactant molecules.
#[derive(Debug, Clone)]
pub struct ReactantSet {
    pub molecules: Vec<Molecule>,
    key: String,
}

impl ReactantSet {
    pub fn new(mut molecules: Vec<Molecule>) -> Self {
        molecules.sort_by_cached_key(|m| m.canonical_smiles());
        let key = molecules.iter().map(|m| m.canonical_smiles()).collect::<Vec<_>>().join(".");
        ReactantSet { molecules, key }
    }

    /// Builds a set from SMILES strings (one molecule per `.`-separated
    /// fragment is not assumed; each string is one molecule).
    pub fn from_molecules(molecules: &[Molecule]) -> Self {
        Self::new(molecules.to_vec())
    }

    /// Sorted canonical SMILES joined with `.`; equal for equal sets.
    pub fn canonical(&self) -> &str {
        &self.key
    }

    pub fn smiles(&self) -> Vec<String> {
        self.molecules.iter().map(|m| m.canonical_smiles()).collect()
    }
}

impl PartialEq for ReactantSet {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for ReactantSet {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultOrder {
    /// Sorted by canonical form.
    Canonical,
    /// Canonical order shuffled with the given seed.
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct ApplyOptions {
    pub max_embeddings: usize,
    pub order: ResultOrder,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        ApplyOptions { max_embeddings: 1000, order: ResultOrder::Canonical }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ApplyReport {
    pub reactant_sets: Vec<ReactantSet>,
    pub embeddings: usize,
    /// Embeddings that could not be rewritten; they are skipped.
    pub errors: Vec<RewriteError>,
}

/// Applies `template` at every embedding of its product pattern in `mol`.
pub fn apply_template(template: &ReactionTemplate, mol: &Molecule) -> Vec<ReactantSet> {
    apply_template_with(template, mol, &ApplyOptions::default()).reactant_sets
}

pub fn apply_template_with(template: &ReactionTemplate, mol: &Molecule, opts: &ApplyOptions) -> ApplyReport {
    let mut report = ApplyReport::default();
    let mut unique: BTreeMap<String, ReactantSet> = BTreeMap::new();
    for_each_embedding(&template.product_pattern, mol, |embedding| {
        report.embeddings += 1;
        match rewrite_embedding(template, mol, embedding) {
            Ok(set) => {
                unique.entry(set.key.clone()).or_insert(set);
            }
            Err(e) => report.errors.push(e),
        }
        if report.embeddings >= opts.max_embeddings {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    report.reactant_sets = unique.into_values().collect();
    if let ResultOrder::Shuffled(seed) = opts.order {
        report.reactant_sets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    report
}

/// Rewrites one embedding (product-pattern atom -> molecule atom).
pub fn rewrite_embedding(
    template: &ReactionTemplate,
    mol: &Molecule,
    embedding: &[usize],
) -> Result<ReactantSet, RewriteError> {
    let pattern = &template.product_pattern;
    let n = mol.atom_count();
    let mut matched_pattern_atom = vec![usize::MAX; n];
    let mut mol_atom_of_map: BTreeMap<u32, usize> = BTreeMap::new();
    for (p, &m) in embedding.iter().enumerate() {
        matched_pattern_atom[m] = p;
        if let Some(map) = pattern.map(p) {
            mol_atom_of_map.insert(map, m);
        }
    }

    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut present: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut mol_to_out = vec![usize::MAX; n];
    let mut add_bond = |bonds: &mut Vec<Bond>, a: usize, b: usize, order: BondOrder| {
        if present.insert((a.min(b), a.max(b))) {
            bonds.push(Bond { a, b, order });
        }
    };

    // Template-side reactant atoms and bonds.
    for rp in &template.reactant_patterns {
        let offset = atoms.len();
        for i in 0..rp.atom_count() {
            let source = rp.map(i).and_then(|m| mol_atom_of_map.get(&m).copied());
            let atom = if rp.is_wildcard(i) {
                match source {
                    Some(m) => *mol.atom(m),
                    None => return Err(RewriteError::UnresolvedWildcard),
                }
            } else {
                *rp.atom(i)
            };
            if let Some(m) = source {
                mol_to_out[m] = atoms.len();
            }
            atoms.push(atom);
        }
        for b in rp.graph().bonds() {
            add_bond(&mut bonds, offset + b.a, offset + b.b, b.order);
        }
    }

    // Unmatched molecule atoms are carried through unchanged.
    for m in 0..n {
        if matched_pattern_atom[m] == usize::MAX {
            mol_to_out[m] = atoms.len();
            atoms.push(*mol.atom(m));
        }
    }

    for bond in mol.bonds() {
        let (pa, pb) = (matched_pattern_atom[bond.a], matched_pattern_atom[bond.b]);
        match (pa != usize::MAX, pb != usize::MAX) {
            (false, false) => add_bond(&mut bonds, mol_to_out[bond.a], mol_to_out[bond.b], bond.order),
            (true, true) => {
                // Pattern bonds are replaced by the reactant side; other bonds
                // between matched atoms survive when both ends do.
                if pattern.bond_between(pa, pb).is_none()
                    && mol_to_out[bond.a] != usize::MAX
                    && mol_to_out[bond.b] != usize::MAX
                {
                    add_bond(&mut bonds, mol_to_out[bond.a], mol_to_out[bond.b], bond.order);
                }
            }
            _ => {
                let (inside, outside, p) = if pa != usize::MAX { (bond.a, bond.b, pa) } else { (bond.b, bond.a, pb) };
                if mol_to_out[inside] == usize::MAX {
                    return Err(RewriteError::DetachedNeighbor {
                        atom: outside,
                        map: pattern.map(p).unwrap_or(0),
                    });
                }
                add_bond(&mut bonds, mol_to_out[inside], mol_to_out[outside], bond.order);
            }
        }
    }

    let whole = Molecule::from_parts(atoms, bonds).map_err(|e| RewriteError::InvalidGraph(e.to_string()))?;
    let molecules = whole
        .components()
        .iter()
        .map(|c| whole.induced(c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RewriteError::InvalidGraph(e.to_string()))?;
    Ok(ReactantSet::new(molecules))
}

//! Molecular graphs: SMILES parsing and writing, exact substructure matching
//! and template application as a graph rewrite.

pub mod elements;
mod matcher;
mod rewrite;
mod smiles;
mod writer;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use matcher::{find_embeddings, for_each_embedding, is_isomorphic, subgraph_match};
pub use rewrite::{
    apply_template, apply_template_with, rewrite_embedding, ApplyOptions, ApplyReport,
    ReactantSet, ResultOrder, RewriteError,
};
pub use smiles::{parse_pattern, parse_reaction_smiles, parse_smiles, parse_template,
    parse_template_with, ReactionSmiles, TemplateParseOptions};
pub use writer::canonical_ranks;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported feature at offset {offset}: {feature}")]
    UnsupportedFeature { offset: usize, feature: String },
    #[error("reactant-side atom map {0} has no product-side counterpart")]
    MissingMap(u32),
    #[error("atom map {0} used more than once")]
    DuplicateMap(u32),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

impl ChemError {
    pub(crate) fn syntax(offset: usize, message: impl Into<String>) -> Self {
        ChemError::Syntax { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Small stable integer code used in hashing and canonical keys.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    /// Atomic number, 0 for `*`.
    pub element: u8,
    pub charge: i8,
    pub aromatic: bool,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom { element, charge: 0, aromatic: false }
    }

    pub fn symbol(&self) -> &'static str {
        elements::symbol(self.element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Notes on input features that were accepted but dropped while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseFlags {
    pub stereo_dropped: bool,
    pub isotope_dropped: bool,
    pub hydrogens_dropped: bool,
}

/// Read access shared by molecules and patterns.
pub trait GraphView {
    fn atom_count(&self) -> usize;
    fn atom(&self, i: usize) -> &Atom;
    /// `(neighbor, bond index)` pairs, sorted by neighbor index.
    fn neighbors(&self, i: usize) -> &[(usize, usize)];
    fn bond(&self, b: usize) -> &Bond;
    fn bond_count(&self) -> usize;

    fn is_wildcard(&self, _i: usize) -> bool {
        false
    }

    fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    fn bond_between(&self, i: usize, j: usize) -> Option<BondOrder> {
        self.neighbors(i)
            .iter()
            .find(|(n, _)| *n == j)
            .map(|&(_, b)| self.bond(b).order)
    }
}

/// An undirected labeled graph of atoms and bonds.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    source: String,
    flags: ParseFlags,
}

impl Molecule {
    /// Builds a molecule, checking endpoints, self loops and duplicate bonds.
    pub fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, ChemError> {
        if atoms.is_empty() {
            return Err(ChemError::InvalidGraph("molecule has no atoms".into()));
        }
        let mut adjacency = vec![Vec::new(); atoms.len()];
        let mut seen = BTreeSet::new();
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.a >= atoms.len() || bond.b >= atoms.len() {
                return Err(ChemError::InvalidGraph(format!(
                    "bond {idx} references a missing atom"
                )));
            }
            if bond.a == bond.b {
                return Err(ChemError::InvalidGraph(format!("bond {idx} is a self loop")));
            }
            if !seen.insert((bond.a.min(bond.b), bond.a.max(bond.b))) {
                return Err(ChemError::InvalidGraph(format!(
                    "duplicate bond between atoms {} and {}",
                    bond.a, bond.b
                )));
            }
            adjacency[bond.a].push((bond.b, idx));
            adjacency[bond.b].push((bond.a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let mut mol = Molecule { atoms, bonds, adjacency, source: String::new(), flags: ParseFlags::default() };
        mol.source = mol.to_smiles();
        Ok(mol)
    }

    pub(crate) fn with_source(mut self, source: &str, flags: ParseFlags) -> Self {
        self.source = source.to_string();
        self.flags = flags;
        self
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// The text this molecule was parsed from (or its SMILES if built directly).
    pub fn source_text(&self) -> &str {
        &self.source
    }

    pub fn flags(&self) -> ParseFlags {
        self.flags
    }

    /// SMILES written by depth-first traversal from the lowest-index atom.
    pub fn to_smiles(&self) -> String {
        let ranks: Vec<usize> = (0..self.atoms.len()).collect();
        writer::write_smiles(self, &ranks)
    }

    /// SMILES written in canonical atom order; equal for isomorphic graphs.
    pub fn canonical_smiles(&self) -> String {
        let ranks = writer::canonical_ranks(self);
        writer::write_smiles(self, &ranks)
    }

    /// Connected components as sorted atom index lists, ordered by first atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let a = comp[i];
                for &(n, _) in &self.adjacency[a] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// The subgraph induced by `atoms`, renumbered in the given order.
    pub fn induced(&self, atoms: &[usize]) -> Result<Molecule, ChemError> {
        let mut index = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in atoms.iter().enumerate() {
            index[old] = new;
        }
        let new_atoms = atoms.iter().map(|&a| self.atoms[a]).collect();
        let new_bonds = self
            .bonds
            .iter()
            .filter(|b| index[b.a] != usize::MAX && index[b.b] != usize::MAX)
            .map(|b| Bond { a: index[b.a], b: index[b.b], order: b.order })
            .collect();
        Molecule::from_parts(new_atoms, new_bonds)
    }

    /// Relabels atoms: atom `i` becomes atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = vec![Atom::new(0); self.atoms.len()];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond { a: perm[b.a], b: perm[b.b], order: b.order })
            .collect();
        Molecule::from_parts(atoms, bonds).expect("permutation preserves validity")
    }
}

impl GraphView for Molecule {
    fn atom_count(&self) -> usize {
        self.atoms.len()
    }
    fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }
    fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }
    fn bond(&self, b: usize) -> &Bond {
        &self.bonds[b]
    }
    fn bond_count(&self) -> usize {
        self.bonds.len()
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_smiles())
    }
}

/// A query graph with optional atom maps and `*` wildcard atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGraph {
    graph: Molecule,
    maps: Vec<Option<u32>>,
}

impl PatternGraph {
    pub fn new(graph: Molecule, maps: Vec<Option<u32>>) -> Result<Self, ChemError> {
        if maps.len() != graph.atom_count() {
            return Err(ChemError::InvalidGraph("one map slot per atom required".into()));
        }
        let mut seen = BTreeSet::new();
        for m in maps.iter().flatten() {
            if !seen.insert(*m) {
                return Err(ChemError::DuplicateMap(*m));
            }
        }
        Ok(PatternGraph { graph, maps })
    }

    pub fn graph(&self) -> &Molecule {
        &self.graph
    }

    pub fn map(&self, atom: usize) -> Option<u32> {
        self.maps[atom]
    }

    pub fn maps(&self) -> &[Option<u32>] {
        &self.maps
    }

    pub fn atom_with_map(&self, map: u32) -> Option<usize> {
        self.maps.iter().position(|m| *m == Some(map))
    }

    pub fn source_text(&self) -> &str {
        self.graph.source_text()
    }
}

impl GraphView for PatternGraph {
    fn atom_count(&self) -> usize {
        self.graph.atom_count()
    }
    fn atom(&self, i: usize) -> &Atom {
        self.graph.atom(i)
    }
    fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        self.graph.neighbors(i)
    }
    fn bond(&self, b: usize) -> &Bond {
        self.graph.bond(b)
    }
    fn bond_count(&self) -> usize {
        self.graph.bond_count()
    }
    fn is_wildcard(&self, i: usize) -> bool {
        self.graph.atom(i).element == elements::WILDCARD
    }
}

/// A retro-direction rewrite rule: product-side pattern to reactant patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTemplate {
    pub id: usize,
    pub product_pattern: PatternGraph,
    pub reactant_patterns: Vec<PatternGraph>,
    pub train_count: u32,
    /// Reactant-side maps explicitly allowed to lack a product-side atom.
    pub introduced_maps: BTreeSet<u32>,
    source: String,
}

impl ReactionTemplate {
    pub fn source_text(&self) -> &str {
        &self.source
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn with_train_count(mut self, count: u32) -> Self {
        self.train_count = count;
        self
    }
}

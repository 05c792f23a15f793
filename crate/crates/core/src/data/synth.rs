//! Synthetic long-tailed reaction corpora.
//!
//! Templates are disconnection rules built from a small catalogue of
//! reaction centres, specialised by attaching context atoms, so templates
//! form nested generic/specific families. Products embed the template's
//! product pattern in a random scaffold; the recorded reactants are the
//! template's unique rewrite of the product.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::Corpus;
use super::{ReactionRecord, Split, TemplateIndex};
use crate::chemgraph::{apply_template_with, parse_template, ApplyOptions, Atom, Bond, BondOrder, Molecule, ReactionTemplate};
use crate::fingerprints::splitmix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_templates: usize,
    /// Records of the most popular template.
    pub max_count: u32,
    /// Record count of the template at popularity rank r is
    /// `max(1, round(max_count / (r + 1)^zipf_exponent))`.
    pub zipf_exponent: f64,
    /// Fraction of templates (drawn from the rarer half) whose records are
    /// all pre-assigned to the test split.
    pub zero_shot_fraction: f64,
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Maximum context atoms added to a reaction centre.
    pub max_context: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_templates: 100,
            max_count: 60,
            zipf_exponent: 1.0,
            zero_shot_fraction: 0.15,
            min_atoms: 8,
            max_atoms: 20,
            max_context: 3,
        }
    }
}

use BondOrder::{Double as D, Single as S, Triple as T};

#[derive(Clone, Copy)]
struct CenterAtom {
    element: u8,
    aromatic: bool,
}

const fn al(element: u8) -> CenterAtom {
    CenterAtom { element, aromatic: false }
}

const fn ar(element: u8) -> CenterAtom {
    CenterAtom { element, aromatic: true }
}

struct Center {
    atoms: &'static [CenterAtom],
    bonds: &'static [(usize, usize, BondOrder)],
    /// Bond indices removed on the reactant side.
    broken: &'static [usize],
    /// Bond indices whose order changes on the reactant side.
    changed: &'static [(usize, BondOrder)],
    /// Leaving groups (SMILES, attached by a single bond) on the reactant side.
    leaving: &'static [(usize, &'static str)],
}

const C: u8 = 6;
const N: u8 = 7;
const O: u8 = 8;
const F: u8 = 9;
const SU: u8 = 16;
const CL: u8 = 17;

const CENTERS: &[Center] = &[
    // amide coupling
    Center { atoms: &[al(C), al(O), al(N)], bonds: &[(0, 1, D), (0, 2, S)], broken: &[1], changed: &[], leaving: &[(0, "Cl")] },
    // esterification
    Center {
        atoms: &[al(C), al(O), al(O), al(C)],
        bonds: &[(0, 1, D), (0, 2, S), (2, 3, S)],
        broken: &[1],
        changed: &[],
        leaving: &[(0, "O")],
    },
    // Williamson ether
    Center { atoms: &[al(C), al(O), al(C)], bonds: &[(0, 1, S), (1, 2, S)], broken: &[1], changed: &[], leaving: &[(2, "Br")] },
    // N-alkylation
    Center { atoms: &[al(N), al(C)], bonds: &[(0, 1, S)], broken: &[0], changed: &[], leaving: &[(1, "Br")] },
    // Suzuki coupling
    Center { atoms: &[ar(C), ar(C)], bonds: &[(0, 1, S)], broken: &[0], changed: &[], leaving: &[(0, "Br"), (1, "B(O)O")] },
    // Buchwald-Hartwig amination
    Center { atoms: &[ar(C), al(N)], bonds: &[(0, 1, S)], broken: &[0], changed: &[], leaving: &[(0, "Br")] },
    // sulfonamide formation
    Center {
        atoms: &[al(SU), al(O), al(O), al(N)],
        bonds: &[(0, 1, D), (0, 2, D), (0, 3, S)],
        broken: &[2],
        changed: &[],
        leaving: &[(0, "Cl")],
    },
    // thioether
    Center { atoms: &[al(C), al(SU), al(C)], bonds: &[(0, 1, S), (1, 2, S)], broken: &[1], changed: &[], leaving: &[(2, "Cl")] },
    // Grignard addition to a carbonyl
    Center {
        atoms: &[al(C), al(O), al(C)],
        bonds: &[(0, 1, S), (0, 2, S)],
        broken: &[1],
        changed: &[(0, D)],
        leaving: &[(2, "Br")],
    },
    // urea from a carbamoyl chloride
    Center {
        atoms: &[al(N), al(C), al(O), al(N)],
        bonds: &[(0, 1, S), (1, 2, D), (1, 3, S)],
        broken: &[2],
        changed: &[],
        leaving: &[(1, "Cl")],
    },
    // aromatic substitution
    Center { atoms: &[ar(C), al(O)], bonds: &[(0, 1, S)], broken: &[0], changed: &[], leaving: &[(0, "F")] },
    // Sonogashira coupling
    Center { atoms: &[ar(C), al(C), al(C)], bonds: &[(0, 1, S), (1, 2, T)], broken: &[0], changed: &[], leaving: &[(0, "Br")] },
];

fn valence(element: u8, has_double: bool) -> i32 {
    match element {
        C => 4,
        N => 3,
        O => 2,
        SU if has_double => 6,
        SU => 2,
        5 => 3,
        _ => 1,
    }
}

fn order_value(o: BondOrder) -> i32 {
    match o {
        BondOrder::Single | BondOrder::Aromatic => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
    }
}

/// A concrete template: a tree of mapped product atoms (map = index + 1).
#[derive(Clone)]
struct Spec {
    atoms: Vec<CenterAtom>,
    bonds: Vec<(usize, usize, BondOrder)>,
    broken: BTreeSet<usize>,
    changed: BTreeMap<usize, BondOrder>,
    leaving: Vec<(usize, &'static str)>,
    n_center: usize,
}

impl Spec {
    fn from_center(c: &Center) -> Self {
        Spec {
            atoms: c.atoms.to_vec(),
            bonds: c.bonds.to_vec(),
            broken: c.broken.iter().copied().collect(),
            changed: c.changed.iter().copied().collect(),
            leaving: c.leaving.to_vec(),
            n_center: c.atoms.len(),
        }
    }

    /// Bond-order sums on the product and reactant side, per atom.
    fn used(&self) -> (Vec<i32>, Vec<i32>) {
        let n = self.atoms.len();
        let (mut prod, mut reac) = (vec![0; n], vec![0; n]);
        for (k, &(a, b, o)) in self.bonds.iter().enumerate() {
            let weight = if self.atoms[a].aromatic && self.atoms[b].aromatic { 1 } else { order_value(o) };
            prod[a] += weight;
            prod[b] += weight;
            if !self.broken.contains(&k) {
                let ro = self.changed.get(&k).map_or(weight, |&o| order_value(o));
                reac[a] += ro;
                reac[b] += ro;
            }
        }
        for &(a, _) in &self.leaving {
            reac[a] += 1;
        }
        (prod, reac)
    }

    /// Remaining single-bond capacity of each atom that holds on both sides.
    /// Aromatic atoms reserve two ring bonds and allow one substituent.
    fn slack(&self) -> Vec<i32> {
        let (prod, reac) = self.used();
        (0..self.atoms.len())
            .map(|i| {
                let a = self.atoms[i];
                let cap = if a.aromatic {
                    1
                } else {
                    let has_double = self.bonds.iter().any(|&(x, y, o)| (x == i || y == i) && o != S);
                    valence(a.element, has_double)
                };
                cap - prod[i].max(reac[i])
            })
            .collect()
    }

    fn adjacency(&self, include_broken: bool) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (k, &(a, b, o)) in self.bonds.iter().enumerate() {
            if !include_broken && self.broken.contains(&k) {
                continue;
            }
            let o = if include_broken { o } else { self.changed.get(&k).copied().unwrap_or(o) };
            adj[a].push((b, o));
            adj[b].push((a, o));
        }
        adj
    }

    fn atom_text(&self, i: usize) -> String {
        let a = self.atoms[i];
        let sym = crate::chemgraph::elements::symbol(a.element);
        let sym = if a.aromatic { sym.to_ascii_lowercase() } else { sym.to_string() };
        format!("[{sym}:{}]", i + 1)
    }

    fn bond_text(&self, a: usize, b: usize, o: BondOrder) -> &'static str {
        match o {
            BondOrder::Single if self.atoms[a].aromatic && self.atoms[b].aromatic => "-",
            BondOrder::Single => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => ":",
        }
    }

    fn write_tree(&self, adj: &[Vec<(usize, BondOrder)>], v: usize, parent: usize, extras: &BTreeMap<usize, Vec<&str>>, out: &mut String, seen: &mut [bool]) {
        seen[v] = true;
        out.push_str(&self.atom_text(v));
        let mut items: Vec<String> = Vec::new();
        for &(u, o) in &adj[v] {
            if u == parent || seen[u] {
                continue;
            }
            let mut s = self.bond_text(v, u, o).to_string();
            self.write_tree(adj, u, v, extras, &mut s, seen);
            items.push(s);
        }
        if let Some(lgs) = extras.get(&v) {
            items.extend(lgs.iter().map(|s| s.to_string()));
        }
        let last = items.len().saturating_sub(1);
        for (k, item) in items.into_iter().enumerate() {
            if k == last {
                out.push_str(&item);
            } else {
                out.push('(');
                out.push_str(&item);
                out.push(')');
            }
        }
    }

    fn text(&self) -> String {
        let n = self.atoms.len();
        let mut product = String::new();
        self.write_tree(&self.adjacency(true), 0, usize::MAX, &BTreeMap::new(), &mut product, &mut vec![false; n]);
        let adj = self.adjacency(false);
        let mut extras: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for &(a, lg) in &self.leaving {
            extras.entry(a).or_default().push(lg);
        }
        let mut seen = vec![false; n];
        let mut parts = Vec::new();
        for start in 0..n {
            if !seen[start] {
                let mut s = String::new();
                self.write_tree(&adj, start, usize::MAX, &extras, &mut s, &mut seen);
                parts.push(s);
            }
        }
        format!("{product}>>{}", parts.join("."))
    }
}

const CONTEXT_ELEMENTS: &[(CenterAtom, f64)] =
    &[(al(C), 4.0), (al(N), 1.5), (al(O), 1.5), (al(F), 0.7), (al(CL), 0.7), (ar(C), 1.2)];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, f64)]) -> &'a T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (item, w) in items {
        if u < *w {
            return item;
        }
        u -= w;
    }
    &items[items.len() - 1].0
}

fn random_spec(rng: &mut ChaCha8Rng, max_context: usize) -> Spec {
    let mut spec = Spec::from_center(&CENTERS[rng.random_range(0..CENTERS.len())]);
    let n_ctx = *pick(rng, &[(0usize, 1.0), (1, 3.0), (2, 3.0), (3, 2.0)]).min(&max_context);
    let mut depth = vec![0usize; spec.n_center];
    for _ in 0..n_ctx {
        let slack = spec.slack();
        let anchors: Vec<usize> =
            (0..spec.atoms.len()).filter(|&i| slack[i] >= 1 && !spec.atoms[i].aromatic && depth[i] < 2).collect();
        let Some(&anchor) = anchors.choose(rng) else { break };
        let mut atom = *pick(rng, CONTEXT_ELEMENTS);
        if depth[anchor] == 1 && atom.aromatic {
            atom = al(C);
        }
        spec.atoms.push(atom);
        depth.push(depth[anchor] + 1);
        spec.bonds.push((anchor, spec.atoms.len() - 1, S));
    }
    spec
}

/// Molecule under construction with per-atom free valence.
struct Builder {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    slack: Vec<i32>,
}

impl Builder {
    fn add(&mut self, element: u8, aromatic: bool, slack: i32) -> usize {
        let mut a = Atom::new(element);
        a.aromatic = aromatic;
        self.atoms.push(a);
        self.slack.push(slack);
        self.atoms.len() - 1
    }

    fn bond(&mut self, a: usize, b: usize, order: BondOrder) {
        self.bonds.push(Bond { a, b, order });
    }

    /// Benzene ring through `at` (already present), other atoms with one
    /// free position each.
    fn ring_through(&mut self, at: usize) {
        let mut prev = at;
        for _ in 0..5 {
            let r = self.add(C, true, 1);
            self.bond(prev, r, BondOrder::Aromatic);
            prev = r;
        }
        self.bond(prev, at, BondOrder::Aromatic);
    }

    fn grow(&mut self, rng: &mut ChaCha8Rng, target: usize) {
        const FRAGMENTS: &[(u8, f64)] = &[(0, 6.0), (1, 1.5), (2, 1.0), (3, 1.0), (4, 0.5), (5, 0.5), (6, 0.7)];
        while self.atoms.len() < target {
            let open: Vec<usize> = (0..self.atoms.len()).filter(|&i| self.slack[i] >= 1).collect();
            let Some(&at) = open.choose(rng) else { break };
            self.slack[at] -= 1;
            let kind = *pick(rng, FRAGMENTS);
            let new = match kind {
                1 if self.atoms.len() + 6 <= target + 2 => {
                    let r = self.add(C, true, 0);
                    self.ring_through(r);
                    r
                }
                2 => self.add(N, false, 2),
                3 => self.add(O, false, 1),
                4 => self.add(F, false, 0),
                5 => self.add(CL, false, 0),
                6 => {
                    let c = self.add(C, false, 1);
                    let o = self.add(O, false, 0);
                    self.bond(c, o, D);
                    c
                }
                _ => self.add(C, false, 3),
            };
            self.bond(at, new, S);
        }
    }
}

/// A product containing the template's product pattern with exactly one
/// distinct rewrite, and that rewrite's reactants.
fn make_product(
    rng: &mut ChaCha8Rng,
    spec: &Spec,
    template: &ReactionTemplate,
    cfg: &SynthConfig,
) -> Option<(Molecule, Vec<Molecule>)> {
    let slack = spec.slack();
    for attempt in 0..60 {
        let mut b = Builder { atoms: Vec::new(), bonds: Vec::new(), slack: Vec::new() };
        for (i, a) in spec.atoms.iter().enumerate() {
            b.add(a.element, a.aromatic, slack[i]);
        }
        for &(x, y, o) in &spec.bonds {
            b.bond(x, y, o);
        }
        for i in 0..spec.atoms.len() {
            if spec.atoms[i].aromatic {
                b.ring_through(i);
            }
        }
        // Later attempts use smaller scaffolds, which collide less often.
        let hi = cfg.max_atoms.saturating_sub(attempt / 6).max(cfg.min_atoms);
        let target = rng.random_range(cfg.min_atoms..=hi.max(cfg.min_atoms));
        b.grow(rng, target);
        let mol = Molecule::from_parts(b.atoms, b.bonds).ok()?;
        let report = apply_template_with(template, &mol, &ApplyOptions::default());
        if report.reactant_sets.len() == 1 && report.errors.is_empty() {
            let set = report.reactant_sets.into_iter().next().unwrap();
            return Some((mol, set.molecules));
        }
    }
    None
}

fn template_key(t: &ReactionTemplate) -> String {
    let mut reactants: Vec<String> = t.reactant_patterns.iter().map(|p| p.graph().canonical_smiles()).collect();
    reactants.sort();
    format!("{}>>{}", t.product_pattern.graph().canonical_smiles(), reactants.join("."))
}

/// Generates a corpus. Deterministic in `seed`; records of zero-shot
/// templates carry the test split, all others are unassigned.
pub fn synth_corpus(seed: u64, cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5717_c0a1));
    let mut specs: Vec<(Spec, ReactionTemplate, usize)> = Vec::new();
    let mut keys = BTreeSet::new();
    let mut tries = 0;
    while specs.len() < cfg.n_templates && tries < 200 * cfg.n_templates.max(1) {
        tries += 1;
        let spec = random_spec(&mut rng, cfg.max_context);
        let template = parse_template(&spec.text()).expect("generated templates parse");
        if keys.insert(template_key(&template)) {
            let n_ctx = spec.atoms.len() - spec.n_center;
            specs.push((spec, template, n_ctx));
        }
    }

    // Popularity: generic templates first, then a random order.
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| specs[i].2.min(1));
    let mut counts = vec![0u32; specs.len()];
    for (rank, &i) in order.iter().enumerate() {
        let c = cfg.max_count as f64 / ((rank + 1) as f64).powf(cfg.zipf_exponent);
        counts[i] = (c.round() as u32).max(1);
    }
    let half = order.len() / 2;
    let mut tail: Vec<usize> = order[half..].to_vec();
    tail.shuffle(&mut rng);
    let n_zero = ((cfg.zero_shot_fraction * specs.len() as f64).round() as usize).min(tail.len());
    let zero_shot: BTreeSet<usize> = tail[..n_zero].iter().copied().collect();

    let mut templates = Vec::new();
    let mut records = Vec::new();
    for (i, (spec, template, _)) in specs.iter().enumerate() {
        templates.push(template.clone().with_id(i));
        let mut trng = ChaCha8Rng::seed_from_u64(splitmix(seed) ^ splitmix(i as u64 + 1));
        for _ in 0..counts[i] {
            if let Some((product, reactants)) = make_product(&mut trng, spec, template, cfg) {
                records.push(ReactionRecord {
                    id: String::new(),
                    product,
                    reactants,
                    reagents: Vec::new(),
                    template_id: i,
                    split: zero_shot.contains(&i).then_some(Split::Test),
                });
            }
        }
    }
    records.shuffle(&mut rng);
    for (k, r) in records.iter_mut().enumerate() {
        r.id = format!("R{k:06}");
    }
    let index = TemplateIndex::with_records(templates, &records);
    Corpus { records, index, rejects: Vec::new(), template_rejects: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{subgraph_match, GraphView};
    use crate::data::{reactions_text, templates_text};

    #[test]
    fn centres_parse_and_rewrite() {
        for c in CENTERS {
            let spec = Spec::from_center(c);
            let t = parse_template(&spec.text()).unwrap();
            assert_eq!(t.product_pattern.atom_count(), c.atoms.len(), "{}", spec.text());
            assert!(spec.slack().iter().all(|&s| s >= 0), "{}", spec.text());
        }
    }

    #[test]
    fn corpus_is_consistent_and_deterministic() {
        let cfg = SynthConfig::default();
        let a = synth_corpus(7, &cfg);
        assert_eq!(a.index.len(), cfg.n_templates);
        for r in &a.records {
            let t = a.index.template(r.template_id);
            assert!(subgraph_match(&t.product_pattern, &r.product).is_some());
            let sets = crate::chemgraph::apply_template(t, &r.product);
            assert_eq!(sets.len(), 1);
            assert_eq!(sets[0].canonical(), r.reactant_key());
        }
        let b = synth_corpus(7, &cfg);
        assert_eq!(reactions_text(&a.records), reactions_text(&b.records));
        assert_eq!(templates_text(&a.index), templates_text(&b.index));
        assert_ne!(reactions_text(&a.records), reactions_text(&synth_corpus(8, &cfg).records));
    }

    #[test]
    fn long_tail() {
        let cfg = SynthConfig::default();
        let c = crate::data::stratified_split(&synth_corpus(1, &cfg).records, 1);
        let index = TemplateIndex::with_records(synth_corpus(1, &cfg).index.templates().to_vec(), &c);
        let rare = (0..index.len()).filter(|&i| index.train_count(i) <= 1).count();
        assert!(rare as f64 >= 0.3 * index.len() as f64, "{rare}");
        let zero_shot = (0..index.len()).filter(|&i| index.train_count(i) == 0 && index.counts(i).test > 0).count();
        assert!(zero_shot as f64 >= 0.1 * index.len() as f64, "{zero_shot}");
    }
}

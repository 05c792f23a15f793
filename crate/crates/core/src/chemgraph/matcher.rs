//! VF2-style backtracking substructure search (non-induced, injective).

use std::ops::ControlFlow;

use super::GraphView;

struct Plan {
    /// Pattern atoms in matching order.
    order: Vec<usize>,
    /// For each position, an earlier-matched pattern neighbor used to
    /// generate candidates, or `None` for the first atom of a component.
    anchor: Vec<Option<usize>>,
}

fn plan<P: GraphView>(pattern: &P) -> Plan {
    let n = pattern.atom_count();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut anchor = Vec::with_capacity(n);
    // Seed each component with its most constrained atom: specific element,
    // rarer than carbon, highest degree, then lowest index.
    let priority = |i: usize| {
        let a = pattern.atom(i);
        (
            pattern.is_wildcard(i),
            a.element == 6 && !a.aromatic,
            std::cmp::Reverse(pattern.degree(i)),
            i,
        )
    };
    while order.len() < n {
        let seed = (0..n).filter(|&i| !placed[i]).min_by_key(|&i| priority(i)).unwrap();
        placed[seed] = true;
        order.push(seed);
        anchor.push(None);
        let mut head = order.len() - 1;
        while head < order.len() {
            let cur = order[head];
            let mut next: Vec<usize> = pattern
                .neighbors(cur)
                .iter()
                .map(|&(nb, _)| nb)
                .filter(|&nb| !placed[nb])
                .collect();
            next.sort_by_key(|&i| priority(i));
            for nb in next {
                placed[nb] = true;
                order.push(nb);
                anchor.push(Some(cur));
            }
            head += 1;
        }
    }
    Plan { order, anchor }
}

struct Search<'a, P, M> {
    pattern: &'a P,
    mol: &'a M,
    plan: Plan,
    mapping: Vec<usize>,
    used: Vec<bool>,
}

impl<'a, P: GraphView, M: GraphView> Search<'a, P, M> {
    fn compatible(&self, p: usize, m: usize) -> bool {
        if self.used[m] || self.mol.degree(m) < self.pattern.degree(p) {
            return false;
        }
        if !self.pattern.is_wildcard(p) {
            let (pa, ma) = (self.pattern.atom(p), self.mol.atom(m));
            if pa.element != ma.element || pa.charge != ma.charge || pa.aromatic != ma.aromatic {
                return false;
            }
        }
        for &(q, b) in self.pattern.neighbors(p) {
            let image = self.mapping[q];
            if image == usize::MAX {
                continue;
            }
            match self.mol.bond_between(m, image) {
                Some(order) if order == self.pattern.bond(b).order => {}
                _ => return false,
            }
        }
        true
    }

    fn run<F: FnMut(&[usize]) -> ControlFlow<()>>(&mut self, depth: usize, visit: &mut F) -> ControlFlow<()> {
        if depth == self.plan.order.len() {
            return visit(&self.mapping);
        }
        let p = self.plan.order[depth];
        match self.plan.anchor[depth] {
            Some(q) => {
                let image = self.mapping[q];
                for k in 0..self.mol.neighbors(image).len() {
                    let m = self.mol.neighbors(image)[k].0;
                    self.try_pair(depth, p, m, visit)?;
                }
            }
            None => {
                for m in 0..self.mol.atom_count() {
                    self.try_pair(depth, p, m, visit)?;
                }
            }
        }
        ControlFlow::Continue(())
    }

    fn try_pair<F: FnMut(&[usize]) -> ControlFlow<()>>(
        &mut self,
        depth: usize,
        p: usize,
        m: usize,
        visit: &mut F,
    ) -> ControlFlow<()> {
        if !self.compatible(p, m) {
            return ControlFlow::Continue(());
        }
        self.mapping[p] = m;
        self.used[m] = true;
        let flow = self.run(depth + 1, visit);
        self.mapping[p] = usize::MAX;
        self.used[m] = false;
        flow
    }
}

/// Calls `visit` with each embedding (pattern atom -> molecule atom) until it
/// breaks. Candidates at every branch point are tried in ascending molecule
/// atom index, so the enumeration order is deterministic.
pub fn for_each_embedding<P, M, F>(pattern: &P, mol: &M, mut visit: F)
where
    P: GraphView,
    M: GraphView,
    F: FnMut(&[usize]) -> ControlFlow<()>,
{
    if pattern.atom_count() > mol.atom_count() || pattern.bond_count() > mol.bond_count() {
        return;
    }
    let mut search = Search {
        pattern,
        mol,
        plan: plan(pattern),
        mapping: vec![usize::MAX; pattern.atom_count()],
        used: vec![false; mol.atom_count()],
    };
    let _ = search.run(0, &mut visit);
}

/// First embedding of `pattern` into `mol`, if any.
pub fn subgraph_match<P: GraphView, M: GraphView>(pattern: &P, mol: &M) -> Option<Vec<usize>> {
    let mut found = None;
    for_each_embedding(pattern, mol, |m| {
        found = Some(m.to_vec());
        ControlFlow::Break(())
    });
    found
}

/// Up to `limit` embeddings in enumeration order.
pub fn find_embeddings<P: GraphView, M: GraphView>(pattern: &P, mol: &M, limit: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if limit == 0 {
        return out;
    }
    for_each_embedding(pattern, mol, |m| {
        out.push(m.to_vec());
        if out.len() >= limit {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    out
}

/// Graph isomorphism via an embedding between graphs of equal size.
pub fn is_isomorphic<A: GraphView, B: GraphView>(a: &A, b: &B) -> bool {
    a.atom_count() == b.atom_count() && a.bond_count() == b.bond_count() && subgraph_match(a, b).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{parse_pattern, parse_smiles, Molecule};

    /// Exhaustive injection enumeration, independent of the search above.
    pub(crate) fn brute_force<P: GraphView>(pattern: &P, mol: &Molecule) -> Vec<Vec<usize>> {
        let (np, nm) = (pattern.atom_count(), mol.atom_count());
        let mut out = Vec::new();
        let mut cur = vec![0usize; np];
        fn rec<P: GraphView>(d: usize, cur: &mut Vec<usize>, np: usize, nm: usize, p: &P, m: &Molecule, out: &mut Vec<Vec<usize>>) {
            if d == np {
                let ok_atoms = (0..np).all(|i| {
                    p.is_wildcard(i) || {
                        let (a, b) = (p.atom(i), m.atom(cur[i]));
                        a.element == b.element && a.charge == b.charge && a.aromatic == b.aromatic
                    }
                });
                let ok_bonds = (0..p.bond_count()).all(|k| {
                    let bd = p.bond(k);
                    m.bond_between(cur[bd.a], cur[bd.b]) == Some(bd.order)
                });
                if ok_atoms && ok_bonds {
                    out.push(cur.clone());
                }
                return;
            }
            for x in 0..nm {
                if cur[..d].contains(&x) {
                    continue;
                }
                cur[d] = x;
                rec(d + 1, cur, np, nm, p, m, out);
            }
        }
        if np <= nm {
            rec(0, &mut cur, np, nm, pattern, mol, &mut out);
        }
        out
    }

    #[test]
    fn spec_examples() {
        let p = parse_pattern("C=O").unwrap();
        assert!(subgraph_match(&p, &parse_smiles("CC=O").unwrap()).is_some());
        assert!(subgraph_match(&p, &parse_smiles("CCO").unwrap()).is_none());
        let c = parse_pattern("C").unwrap();
        assert_eq!(subgraph_match(&c, &parse_smiles("C").unwrap()), Some(vec![0]));
        // Oracle agreement on the same inputs.
        assert_eq!(brute_force(&p, &parse_smiles("CC=O").unwrap()).len(), 1);
        assert!(brute_force(&p, &parse_smiles("CCO").unwrap()).is_empty());
    }

    #[test]
    fn wildcards_and_charges() {
        let p = parse_pattern("*C=O").unwrap();
        assert!(subgraph_match(&p, &parse_smiles("NC=O").unwrap()).is_some());
        let p = parse_pattern("[N+]").unwrap();
        assert!(subgraph_match(&p, &parse_smiles("CN").unwrap()).is_none());
        assert!(subgraph_match(&p, &parse_smiles("C[N+](C)(C)C").unwrap()).is_some());
    }

    #[test]
    fn enumeration_is_ascending_and_complete() {
        let p = parse_pattern("CC").unwrap();
        let m = parse_smiles("CCC").unwrap();
        let found = find_embeddings(&p, &m, 100);
        let mut oracle = brute_force(&p, &m);
        oracle.sort();
        let mut sorted = found.clone();
        sorted.sort();
        assert_eq!(sorted, oracle);
        assert_eq!(found[0], vec![0, 1]);
    }

    #[test]
    fn disconnected_patterns() {
        let p = parse_pattern("O.O").unwrap();
        assert!(subgraph_match(&p, &parse_smiles("OCO").unwrap()).is_some());
        assert!(subgraph_match(&p, &parse_smiles("CO").unwrap()).is_none());
    }

    #[test]
    fn isomorphism() {
        let a = parse_smiles("OCC=O").unwrap();
        let b = parse_smiles("O=CCO").unwrap();
        assert!(is_isomorphic(&a, &b));
        assert!(!is_isomorphic(&a, &parse_smiles("OC=CO").unwrap()));
    }
}

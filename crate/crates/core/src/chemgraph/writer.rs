//! SMILES output and canonical atom ranking.

use std::collections::BTreeSet;

use super::elements;
use super::{BondOrder, GraphView, Molecule};

fn write_atom(out: &mut String, mol: &Molecule, i: usize) {
    let atom = mol.atoms()[i];
    let sym = elements::symbol(atom.element);
    let bare = atom.charge == 0
        && (atom.element == elements::WILDCARD || elements::is_organic_subset(atom.element))
        && (!atom.aromatic || matches!(atom.element, 5 | 6 | 7 | 8 | 15 | 16));
    if !bare {
        out.push('[');
    }
    if atom.aromatic {
        out.push_str(&sym.to_ascii_lowercase());
    } else {
        out.push_str(sym);
    }
    if !bare {
        match atom.charge {
            0 => {}
            1 => out.push('+'),
            -1 => out.push('-'),
            c if c > 0 => out.push_str(&format!("+{c}")),
            c => out.push_str(&format!("-{}", -c)),
        }
        out.push(']');
    }
}

fn bond_symbol(mol: &Molecule, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atoms()[a].aromatic && mol.atoms()[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(n: usize) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

/// Writes SMILES by depth-first traversal, starting each component at its
/// lowest-ranked atom and visiting neighbors in ascending rank.
pub(crate) fn write_smiles(mol: &Molecule, ranks: &[usize]) -> String {
    let n = mol.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ranks[i]);
    let sorted_neighbors = |i: usize| {
        let mut v: Vec<(usize, usize)> = mol.neighbors(i).to_vec();
        v.sort_by_key(|&(nb, _)| ranks[nb]);
        v
    };

    // First pass: DFS tree and ring-closure bonds.
    let mut visited = vec![false; n];
    let mut visit_pos = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut is_tree_bond = vec![false; mol.bond_count()];
    let mut roots = Vec::new();
    let mut counter = 0;
    for &start in &order {
        if visited[start] {
            continue;
        }
        roots.push(start);
        let mut stack = vec![(start, usize::MAX)];
        while let Some((atom, via)) = stack.pop() {
            if visited[atom] {
                continue;
            }
            visited[atom] = true;
            visit_pos[atom] = counter;
            counter += 1;
            if via != usize::MAX {
                is_tree_bond[via] = true;
                let parent = mol.bond(via).other(atom);
                children[parent].push((atom, via));
            }
            for &(nb, b) in sorted_neighbors(atom).iter().rev() {
                if !visited[nb] {
                    stack.push((nb, b));
                }
            }
        }
    }
    // A bond is a ring closure when it did not become a tree edge.
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (b, bond) in mol.bonds().iter().enumerate() {
        if is_tree_bond[b] {
            continue;
        }
        let (first, second) = if visit_pos[bond.a] < visit_pos[bond.b] { (bond.a, bond.b) } else { (bond.b, bond.a) };
        opens[first].push((second, b));
        closes[second].push((first, b));
    }
    for v in opens.iter_mut().chain(closes.iter_mut()) {
        v.sort_by_key(|&(other, _)| visit_pos[other]);
    }

    let mut out = String::new();
    let mut free: BTreeSet<usize> = (1..100).collect();
    let mut bond_label = vec![0usize; mol.bond_count()];
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        enum Step {
            Open,
            Enter(usize, usize),
            Close,
        }
        let mut stack = vec![Step::Enter(root, usize::MAX)];
        while let Some(step) = stack.pop() {
            let (atom, via) = match step {
                Step::Open => {
                    out.push('(');
                    continue;
                }
                Step::Close => {
                    out.push(')');
                    continue;
                }
                Step::Enter(atom, via) => (atom, via),
            };
            if via != usize::MAX {
                let parent = mol.bond(via).other(atom);
                out.push_str(bond_symbol(mol, parent, atom, mol.bond(via).order));
            }
            write_atom(&mut out, mol, atom);
            for &(_, b) in &closes[atom] {
                let label = bond_label[b];
                out.push_str(&ring_label(label));
                free.insert(label);
            }
            for &(other, b) in &opens[atom] {
                let label = free.pop_first().expect("ring labels exhausted");
                bond_label[b] = label;
                out.push_str(bond_symbol(mol, atom, other, mol.bond(b).order));
                out.push_str(&ring_label(label));
            }
            let kids = &children[atom];
            // Reverse push: branches first, last child continues the chain.
            for (k, &(child, b)) in kids.iter().enumerate().rev() {
                if k + 1 == kids.len() {
                    stack.push(Step::Enter(child, b));
                } else {
                    stack.push(Step::Close);
                    stack.push(Step::Enter(child, b));
                    stack.push(Step::Open);
                }
            }
        }
    }
    out
}

fn dense_rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter().map(|k| sorted.binary_search(k).unwrap()).collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().collect::<BTreeSet<_>>().len()
}

fn refine(mol: &Molecule, mut ranks: Vec<usize>) -> Vec<usize> {
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(n, b)| (ranks[n], mol.bond(b).order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_rank(&keys);
        if class_count(&next) == class_count(&ranks) {
            return next;
        }
        ranks = next;
    }
}

/// Canonical atom ranks: invariant refinement with deterministic tie breaking.
/// Isomorphic molecules receive rank orders that yield identical SMILES.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    let n = mol.atom_count();
    let initial: Vec<(u8, bool, i8, usize, Vec<u8>)> = (0..n)
        .map(|i| {
            let a = mol.atoms()[i];
            let mut orders: Vec<u8> = mol.neighbors(i).iter().map(|&(_, b)| mol.bond(b).order.code()).collect();
            orders.sort_unstable();
            (a.element, a.aromatic, a.charge, mol.degree(i), orders)
        })
        .collect();
    let mut ranks = refine(mol, dense_rank(&initial));
    while class_count(&ranks) < n {
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).unwrap();
        let chosen = (0..n).find(|&i| ranks[i] == tied).unwrap();
        let split: Vec<usize> = (0..n)
            .map(|i| 2 * ranks[i] + usize::from(ranks[i] == tied && i != chosen))
            .collect();
        ranks = refine(mol, dense_rank(&split));
    }
    ranks
}

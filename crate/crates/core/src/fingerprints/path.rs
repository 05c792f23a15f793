//! Linear path fingerprints used by the substructure screen.
//!
//! Every simple path of 0..=`max_bonds` bonds between non-wildcard atoms is
//! labelled by its atom/bond sequence (the smaller of the two reading
//! directions) and hashed. An embedding maps pattern paths onto molecule paths
//! with identical labels, so pattern bits are a subset of molecule bits
//! whenever the pattern matches.

use std::collections::BTreeMap;

use super::{splitmix, BitFingerprint, FingerprintError};
use crate::chemgraph::GraphView;

pub const DEFAULT_MAX_PATH_BONDS: usize = 7;
pub const DEFAULT_SCREEN_WIDTH: usize = 4096;

const P: u64 = 0x100_0000_01b3;

fn atom_token<G: GraphView>(g: &G, i: usize) -> u64 {
    let a = g.atom(i);
    1 + (a.element as u64 | (a.aromatic as u64) << 8 | (a.charge as u8 as u64) << 9)
}

fn bond_token(code: u8) -> u64 {
    0x1_0000 + code as u64
}

/// Polynomial hashes of the token sequence read forwards and backwards,
/// extended one atom at a time; the label is the smaller of the two, so it
/// does not depend on the reading direction.
#[derive(Clone, Copy)]
struct Rolling {
    fwd: u64,
    bwd: u64,
    pow: u64,
}

impl Rolling {
    fn start(tok: u64) -> Self {
        Rolling { fwd: tok, bwd: tok, pow: P }
    }

    fn push(self, tok: u64) -> Self {
        Rolling {
            fwd: self.fwd.wrapping_mul(P).wrapping_add(tok),
            bwd: tok.wrapping_mul(self.pow).wrapping_add(self.bwd),
            pow: self.pow.wrapping_mul(P),
        }
    }

    fn label(self) -> u64 {
        splitmix(self.fwd.min(self.bwd))
    }
}

/// Calls `visit` with the label of every simple path of up to `max_bonds`
/// bonds, once per undirected path.
fn for_each_path<G: GraphView>(g: &G, max_bonds: usize, visit: &mut impl FnMut(u64)) {
    let n = g.atom_count();
    let mut on_path = vec![false; n];
    for start in 0..n {
        if g.is_wildcard(start) {
            continue;
        }
        on_path[start] = true;
        extend(g, max_bonds, start, start, 0, Rolling::start(atom_token(g, start)), &mut on_path, visit);
        on_path[start] = false;
    }
}

#[allow(clippy::too_many_arguments)]
fn extend<G: GraphView>(
    g: &G,
    max_bonds: usize,
    first: usize,
    last: usize,
    len: usize,
    hash: Rolling,
    on_path: &mut [bool],
    visit: &mut impl FnMut(u64),
) {
    // Each path is seen from both ends; keep the reading that starts low.
    if len == 0 || first < last {
        visit(hash.label());
    }
    if len == max_bonds {
        return;
    }
    for &(nb, b) in g.neighbors(last) {
        if on_path[nb] || g.is_wildcard(nb) {
            continue;
        }
        on_path[nb] = true;
        let next = hash.push(bond_token(g.bond(b).order.code())).push(atom_token(g, nb));
        extend(g, max_bonds, first, nb, len + 1, next, on_path, visit);
        on_path[nb] = false;
    }
}

/// Unfolded path label counts; each undirected path is counted once.
pub fn path_counts<G: GraphView>(g: &G, max_bonds: usize) -> BTreeMap<u64, u32> {
    let mut counts = BTreeMap::new();
    for_each_path(g, max_bonds, &mut |id| *counts.entry(id).or_insert(0) += 1);
    counts
}

pub fn path_fp<G: GraphView>(g: &G, width: usize) -> Result<BitFingerprint, FingerprintError> {
    path_fp_with(g, width, DEFAULT_MAX_PATH_BONDS)
}

pub fn path_fp_with<G: GraphView>(g: &G, width: usize, max_bonds: usize) -> Result<BitFingerprint, FingerprintError> {
    let mut fp = BitFingerprint::new(width)?;
    let mask = width as u64 - 1;
    for_each_path(g, max_bonds, &mut |id| fp.set((id & mask) as usize));
    Ok(fp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{parse_pattern, parse_smiles};

    fn subset(a: &BitFingerprint, b: &BitFingerprint) -> bool {
        a.ones().all(|i| b.get(i))
    }

    #[test]
    fn single_atom() {
        let m = path_fp(&parse_smiles("C").unwrap(), 4096).unwrap();
        let p = path_fp(&parse_pattern("C").unwrap(), 4096).unwrap();
        assert!(m.count_ones() <= 1);
        assert_eq!(m, p);
    }

    #[test]
    fn path_sets_contain_pattern_paths() {
        let pat = parse_pattern("C=O").unwrap();
        let mol = parse_smiles("CC=O").unwrap();
        // Oracle at the label level, independent of folding.
        let (pc, mc) = (path_counts(&pat, 7), path_counts(&mol, 7));
        assert!(pc.keys().all(|k| mc.contains_key(k)));
        assert!(subset(&path_fp(&pat, 4096).unwrap(), &path_fp(&mol, 4096).unwrap()));

        let nitrile = parse_pattern("C#N").unwrap();
        assert!(path_counts(&nitrile, 7).keys().any(|k| !mc.contains_key(k)));
        assert!(!subset(&path_fp(&nitrile, 4096).unwrap(), &path_fp(&mol, 4096).unwrap()));
    }

    #[test]
    fn undirected_paths_counted_once() {
        // Propane: 3 atoms, 2 one-bond paths (same label), 1 two-bond path.
        let c = path_counts(&parse_smiles("CCC").unwrap(), 7);
        let mut v: Vec<u32> = c.values().copied().collect();
        v.sort();
        assert_eq!(v, vec![1, 2, 3]);
        // Benzene ring: 6 atoms, 6 paths for each length 1..=5.
        let c = path_counts(&parse_smiles("c1ccccc1").unwrap(), 7);
        assert_eq!(c.values().sum::<u32>(), 6 + 6 * 5);
    }

    #[test]
    fn wildcards_are_skipped() {
        let c = path_counts(&parse_pattern("*C=O").unwrap(), 7);
        assert_eq!(c, path_counts(&parse_pattern("C=O").unwrap(), 7));
    }
}

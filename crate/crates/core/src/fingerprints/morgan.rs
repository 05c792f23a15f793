//! Circular (Morgan-style) atom environment fingerprints.

use std::collections::BTreeMap;

use super::{stable_hash, DenseFingerprint, FingerprintKind};
use crate::chemgraph::GraphView;

fn atom_invariant<G: GraphView>(g: &G, i: usize) -> u64 {
    let a = g.atom(i);
    let bytes = [a.element, a.aromatic as u8, a.charge as u8, g.degree(i).min(255) as u8];
    stable_hash(&bytes)
}

/// One identifier per atom per radius `0..=radius`.
pub(crate) fn morgan_identifiers<G: GraphView>(g: &G, radius: usize) -> Vec<u64> {
    let n = g.atom_count();
    let mut current: Vec<u64> = (0..n).map(|i| atom_invariant(g, i)).collect();
    let mut all = current.clone();
    let mut buf = Vec::new();
    let mut neighborhood = Vec::new();
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                neighborhood.clear();
                neighborhood.extend(g.neighbors(i).iter().map(|&(nb, b)| (g.bond(b).order.code(), current[nb])));
                neighborhood.sort_unstable();
                buf.clear();
                buf.push(r as u8);
                buf.extend_from_slice(&current[i].to_le_bytes());
                for (order, id) in &neighborhood {
                    buf.push(*order);
                    buf.extend_from_slice(&id.to_le_bytes());
                }
                stable_hash(&buf)
            })
            .collect();
        all.extend_from_slice(&next);
        current = next;
    }
    all
}

/// Unfolded identifier counts.
pub fn morgan_counts<G: GraphView>(g: &G, radius: usize) -> BTreeMap<u64, u32> {
    let mut counts = BTreeMap::new();
    for id in morgan_identifiers(g, radius) {
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
}

/// Folded Morgan fingerprint of length `size`; binary mode saturates at 1.
pub fn morgan_fp<G: GraphView>(g: &G, radius: usize, size: usize, counted: bool) -> DenseFingerprint {
    assert!(size >= 1, "fingerprint size must be positive");
    let mut values = vec![0.0; size];
    for id in morgan_identifiers(g, radius) {
        let slot = &mut values[(id % size as u64) as usize];
        if counted {
            *slot += 1.0;
        } else {
            *slot = 1.0;
        }
    }
    DenseFingerprint { values, kind: FingerprintKind::Morgan, binary: !counted }
}

//! Atom-pair features: (atom type, atom type, topological distance).

use std::collections::{BTreeMap, VecDeque};

use super::stable_hash;
use crate::chemgraph::GraphView;

pub const DEFAULT_MAX_PAIR_DISTANCE: usize = 10;

fn distances_from<G: GraphView>(g: &G, src: usize, max: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.atom_count()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(a) = queue.pop_front() {
        if dist[a] == max {
            continue;
        }
        for &(nb, _) in g.neighbors(a) {
            if dist[nb] == usize::MAX {
                dist[nb] = dist[a] + 1;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Counts of unordered atom pairs at distance 1..=`max_distance`.
pub fn atom_pair_counts<G: GraphView>(g: &G, max_distance: usize) -> BTreeMap<u64, u32> {
    let n = g.atom_count();
    let ty = |i: usize| {
        let a = g.atom(i);
        (a.element, a.aromatic as u8, a.charge as u8)
    };
    let mut counts = BTreeMap::new();
    for i in 0..n {
        if g.is_wildcard(i) {
            continue;
        }
        let dist = distances_from(g, i, max_distance);
        for j in i + 1..n {
            if dist[j] == usize::MAX || g.is_wildcard(j) {
                continue;
            }
            let (a, b) = (ty(i).min(ty(j)), ty(i).max(ty(j)));
            let key = [a.0, a.1, a.2, b.0, b.1, b.2, dist[j] as u8];
            *counts.entry(stable_hash(&key)).or_insert(0) += 1;
        }
    }
    counts
}

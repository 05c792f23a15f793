//! Randomized checks of the structural invariants, each against an oracle
//! written independently of the library code.

use std::collections::BTreeSet;

use proptest::prelude::*;

use retrohop::chemgraph::{
    apply_template, is_isomorphic, parse_smiles, subgraph_match, Atom, Bond, BondOrder, GraphView, Molecule, PatternGraph,
};
use retrohop::data::{records_in, stratified_split, synth_corpus, ReactionRecord, Split, SynthConfig};
use retrohop::eval::{rank_scores, template_topk, wilson_interval, RankedPrediction};
use retrohop::fingerprints::{atom_pair_counts, morgan_counts, morgan_fp, path_fp, DEFAULT_MAX_PAIR_DISTANCE};
use retrohop::model::{hopfield_energy, hopfield_update, lgamma_pool, loss_ce, loss_label_retrieval};
use retrohop::numkernel::{softmax, Mat};
use retrohop::screen::{build_applicability_matrix_with, BuildOptions};

const ELEMENTS: [u8; 3] = [6, 7, 8];

/// Random connected graph: a random spanning tree plus a few chords.
fn molecule(max_atoms: usize) -> impl Strategy<Value = Molecule> {
    (1..=max_atoms)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0..ELEMENTS.len(), n),
                prop::collection::vec((any::<prop::sample::Index>(), 0..4u8), n.saturating_sub(1)),
                prop::collection::vec((0..n, 0..n), 0..3),
            )
        })
        .prop_map(|(elements, tree, chords)| {
            let atoms: Vec<Atom> = elements.iter().map(|&e| Atom::new(ELEMENTS[e])).collect();
            let order = |c: u8| if c == 0 { BondOrder::Double } else { BondOrder::Single };
            let mut seen = BTreeSet::new();
            let mut bonds = Vec::new();
            for (i, (parent, o)) in tree.into_iter().enumerate() {
                let (a, b) = (parent.index(i + 1), i + 1);
                seen.insert((a, b));
                bonds.push(Bond { a, b, order: order(o) });
            }
            for (a, b) in chords {
                let key = (a.min(b), a.max(b));
                if a != b && seen.insert(key) {
                    bonds.push(Bond { a: key.0, b: key.1, order: BondOrder::Single });
                }
            }
            Molecule::from_parts(atoms, bonds).unwrap()
        })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn as_pattern(m: Molecule) -> PatternGraph {
    let n = m.atom_count();
    PatternGraph::new(m, vec![None; n]).unwrap()
}

/// Exhaustive search for an injective, label- and bond-preserving map.
fn brute_force_match(p: &PatternGraph, m: &Molecule) -> bool {
    fn rec(d: usize, cur: &mut Vec<usize>, p: &PatternGraph, m: &Molecule) -> bool {
        if d == p.atom_count() {
            return (0..p.bond_count()).all(|k| {
                let b = p.bond(k);
                m.bond_between(cur[b.a], cur[b.b]) == Some(b.order)
            });
        }
        for x in 0..m.atom_count() {
            if cur.contains(&x) || p.atom(d) != m.atom(x) {
                continue;
            }
            cur.push(x);
            if rec(d + 1, cur, p, m) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(0, &mut Vec::new(), p, m)
}

fn subset(words: &[u64], of: &[u64]) -> bool {
    words.iter().zip(of).all(|(a, b)| a & !b == 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matcher_agrees_with_brute_force(p in molecule(4), m in molecule(7)) {
        let p = as_pattern(p);
        prop_assert_eq!(subgraph_match(&p, &m).is_some(), brute_force_match(&p, &m));
    }

    #[test]
    fn induced_subgraphs_always_match(m in molecule(8), keep in prop::collection::vec(any::<bool>(), 8)) {
        let atoms: Vec<usize> = (0..m.atom_count()).filter(|&i| keep[i]).collect();
        prop_assume!(!atoms.is_empty());
        let sub = m.induced(&atoms).unwrap();
        let p = as_pattern(sub);
        prop_assert!(subgraph_match(&p, &m).is_some());
        // Screen soundness: a matching pattern's path bits are covered.
        let (fp, fm) = (path_fp(&p, 2048).unwrap(), path_fp(&m, 2048).unwrap());
        prop_assert!(subset(fp.words(), fm.words()));
    }

    #[test]
    fn smiles_round_trip_is_isomorphic(m in molecule(8)) {
        let back = parse_smiles(&m.to_smiles()).unwrap();
        prop_assert!(is_isomorphic(&m, &back));
        prop_assert_eq!(back.canonical_smiles(), m.canonical_smiles());
    }

    #[test]
    fn canonical_smiles_ignores_atom_order(m in molecule(8).prop_flat_map(|m| { let n = m.atom_count(); (Just(m), permutation(n)) })) {
        let (m, perm) = m;
        prop_assert_eq!(m.permuted(&perm).canonical_smiles(), m.canonical_smiles());
    }

    #[test]
    fn fingerprints_ignore_atom_order(m in molecule(8).prop_flat_map(|m| { let n = m.atom_count(); (Just(m), permutation(n)) })) {
        let (m, perm) = m;
        let q = m.permuted(&perm);
        prop_assert_eq!(morgan_counts(&m, 2), morgan_counts(&q, 2));
        prop_assert_eq!(atom_pair_counts(&m, DEFAULT_MAX_PAIR_DISTANCE), atom_pair_counts(&q, DEFAULT_MAX_PAIR_DISTANCE));
        let (a, b) = (path_fp(&m, 1024).unwrap(), path_fp(&q, 1024).unwrap());
        prop_assert_eq!(a.words(), b.words());
    }

    #[test]
    fn morgan_folding_conserves_counts(m in molecule(8), log_size in 3u32..10) {
        let s = 1usize << log_size;
        let small: f64 = morgan_fp(&m, 2, s, true).values.iter().sum();
        let large: f64 = morgan_fp(&m, 2, 2 * s, true).values.iter().sum();
        prop_assert_eq!(small, large);
    }

    #[test]
    // Spreads are kept where exp(-β·Δz) is representable; beyond ~745 it underflows to 0.
    fn softmax_is_a_distribution(z in prop::collection::vec(-30.0f64..30.0, 1..20), beta in 0.01f64..10.0) {
        let p = softmax(&z, beta);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hopfield_updates_never_raise_energy(
        (d, k) in (1usize..6, 1usize..8),
        seed in any::<u64>(),
        beta in 0.05f64..4.0,
    ) {
        let mut rng = seed;
        let mut next = || { rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((rng >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0 };
        let stored = Mat::from_vec(k, d, (0..k * d).map(|_| next()).collect());
        let mut xi: Vec<f64> = (0..d).map(|_| next()).collect();
        let mut e = hopfield_energy(&xi, &stored, beta);
        for _ in 0..5 {
            xi = hopfield_update(&xi, &stored, beta, 1).0;
            let e2 = hopfield_energy(&xi, &stored, beta);
            prop_assert!(e2 <= e + 1e-9, "energy rose from {} to {}", e, e2);
            e = e2;
        }
    }

    #[test]
    fn one_hot_retrieval_is_cross_entropy(z in prop::collection::vec(-5.0f64..5.0, 2..12), pick in any::<prop::sample::Index>()) {
        let p = softmax(&z, 1.0);
        let label = pick.index(p.len());
        let mut l = vec![0.0; p.len()];
        l[label] = 1.0;
        prop_assert_eq!(loss_label_retrieval(&p, &l).unwrap(), loss_ce(&p, label).unwrap());
    }

    #[test]
    fn lgamma_pool_ignores_set_order(
        cols in prop::collection::vec(prop::collection::vec(0u8..6, 4), 1..5).prop_flat_map(|c| { let n = c.len(); (Just(c), permutation(n)) })
    ) {
        let (cols, perm) = cols;
        let cols: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|&x| x as f64).collect()).collect();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| cols[i].clone()).collect();
        let (a, b) = (lgamma_pool(&cols).unwrap(), lgamma_pool(&shuffled).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let hits = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(hits, n).unwrap();
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn ranking_is_sorted_and_drops_non_finite(scores in prop::collection::vec(prop_oneof![-10.0f64..10.0, Just(f64::NEG_INFINITY), Just(f64::NAN)], 0..30)) {
        let r = rank_scores(&scores);
        prop_assert_eq!(r.len(), scores.iter().filter(|s| s.is_finite()).count());
        for w in r.windows(2) {
            let (a, b) = (scores[w[0]], scores[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn topk_is_monotone_and_bounded(rankings in prop::collection::vec((prop::collection::vec(0usize..20, 0..20), 0usize..20), 1..30)) {
        let product = parse_smiles("C").unwrap();
        let records: Vec<ReactionRecord> = rankings.iter().enumerate().map(|(i, (_, t))| ReactionRecord {
            id: i.to_string(), product: product.clone(), reactants: vec![product.clone()], reagents: vec![], template_id: *t, split: None,
        }).collect();
        let preds: Vec<RankedPrediction> = rankings.iter().enumerate().map(|(i, (r, _))| RankedPrediction {
            record_id: i.to_string(), ranking: r.clone(), reactant_sets: None,
        }).collect();
        let refs: Vec<&ReactionRecord> = records.iter().collect();
        let mut last = 0.0;
        for k in 0..=21 {
            let acc = template_topk(&preds, &refs, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc) && acc >= last);
            last = acc;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synth_labels_reproduce_reactants_and_splits_partition(seed in any::<u64>()) {
        let cfg = SynthConfig { n_templates: 30, max_count: 20, ..Default::default() };
        let corpus = synth_corpus(seed, &cfg);
        let templates = corpus.index.templates();
        for r in &corpus.records {
            let keys: Vec<String> = apply_template(&templates[r.template_id], &r.product).iter().map(|s| s.canonical().to_string()).collect();
            prop_assert!(keys.contains(&r.reactant_key()), "record {} not reproduced by its template", r.id);
        }
        // Any template with output matches; outputs conserve atoms and bonds
        // up to the pattern delta.
        for r in corpus.records.iter().take(15) {
            for t in templates {
                let sets = apply_template(t, &r.product);
                if sets.is_empty() {
                    continue;
                }
                prop_assert!(subgraph_match(&t.product_pattern, &r.product).is_some());
                let side = |ps: &[&PatternGraph]| -> (isize, isize) {
                    ps.iter().fold((0, 0), |(a, b), p| (a + p.atom_count() as isize, b + p.bond_count() as isize))
                };
                let (pa, pb) = side(&[&t.product_pattern]);
                let (ra, rb) = side(&t.reactant_patterns.iter().collect::<Vec<_>>());
                for set in &sets {
                    let atoms: usize = set.molecules.iter().map(|m| m.atom_count()).sum();
                    let bonds: usize = set.molecules.iter().map(|m| m.bond_count()).sum();
                    prop_assert_eq!(atoms as isize, r.product.atom_count() as isize - pa + ra);
                    prop_assert_eq!(bonds as isize, r.product.bond_count() as isize - pb + rb);
                }
            }
        }
        let split = stratified_split(&corpus.records, seed);
        prop_assert_eq!(split.len(), corpus.records.len());
        let total: usize = Split::ALL.iter().map(|&s| records_in(&split, s).len()).sum();
        prop_assert_eq!(total, split.len());
        let mut per_template = std::collections::BTreeMap::<usize, (usize, usize)>::new();
        for r in &split {
            let e = per_template.entry(r.template_id).or_default();
            e.0 += 1;
            e.1 += (r.split == Some(Split::Train)) as usize;
        }
        for (t, (n, train)) in per_template {
            prop_assert!(n < 2 || train >= 1, "template {} has {} records but none in train", t, n);
        }
    }

    #[test]
    fn applicability_is_independent_of_worker_count(seed in any::<u64>()) {
        let corpus = synth_corpus(seed, &SynthConfig { n_templates: 40, max_count: 10, ..Default::default() });
        let mols: Vec<Molecule> = corpus.records.iter().take(40).map(|r| r.product.clone()).collect();
        let templates = corpus.index.templates();
        let build = |workers| build_applicability_matrix_with(templates, &mols, &BuildOptions { workers, ..Default::default() }).unwrap();
        let rows: Vec<Vec<Vec<u32>>> = [1, 2, 8].into_iter().map(|w| build(w).rows().to_vec()).collect();
        prop_assert_eq!(&rows[0], &rows[1]);
        prop_assert_eq!(&rows[0], &rows[2]);
    }
}

//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line. `ACCEPTANCE_ONLY=3,6` selects a subset.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrohop::chemgraph::{parse_smiles, parse_template, subgraph_match, Molecule, ReactionTemplate};
use retrohop::data::{
    drop_singleton_train_templates, frequency_buckets, records_in, stratified_split, synth_corpus, Buckets, ReactionRecord, Split,
    SynthConfig, TemplateIndex,
};
use retrohop::eval::{
    bench_inference, pop_fpf, popularity_rank, predict, template_hits, BenchOptions, PredictOptions, RankedPrediction,
};
use retrohop::model::{
    hopfield_energy, hopfield_update, lgamma_pool, loss_ce, loss_label_retrieval, train, DnnConfig, DnnModel, EncoderConfig,
    Featurizer, HopfieldConfig, LayerPooling, MhnConfig, MhnModel, MoleculeFpConfig, MoleculeFpKind, ReactantPooling,
    TemplateFpConfig, TemplateFpKind, TrainConfig, TrainData, Trainable,
};
use retrohop::numkernel::{grad_check, Activation, DropoutMode, GradCheckOptions, Mat, Tape, Tensor2};
use retrohop::screen::{build_applicability_matrix_with, BuildOptions, ScreenMode, TemplateScreen};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn set_param(m: &mut MhnModel, name: &str, value: Tensor2) {
    let id = m.param_id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let p = m.params_mut().get_mut(id);
    assert_eq!(p.value.shape(), value.shape(), "{name}");
    p.value = value;
}

fn synth_templates(n: usize, seed: u64) -> Vec<ReactionTemplate> {
    let corpus = synth_corpus(seed, &SynthConfig { n_templates: n.max(12), max_count: 2, ..Default::default() });
    corpus.index.templates().iter().take(n).cloned().collect()
}

/// Identity encoders and projections, one layer, one update, β = 1, no
/// normalization, identity association activation.
fn special_case_config(size: usize) -> MhnConfig {
    let enc = EncoderConfig { layers: vec![], activation: Activation::Identity, dropout: 0.0 };
    MhnConfig {
        molecule_fp: MoleculeFpConfig { size, radius: 1, ..Default::default() },
        molecule_encoder: enc.clone(),
        template_fps: vec![TemplateFpConfig {
            kind: TemplateFpKind::Morgan,
            pooling: ReactantPooling::Or,
            noise_threshold: -1,
            noise_scale: 0.1,
        }],
        template_encoder: enc,
        hopfield: HopfieldConfig {
            d: size,
            beta: 1.0,
            heads: 1,
            num_layers: 1,
            normalize_input: false,
            normalize_projection: false,
            association_activation: Activation::Identity,
            n_updates: 1,
            layer_pooling: LayerPooling::Mean,
            dropout: 0.0,
        },
    }
}

fn criterion_1() -> Outcome {
    let pool = synth_templates(60, 1);
    let mut worst: f64 = 0.0;
    for draw in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + draw);
        let size = [16, 32, 64, 128][rng.random_range(0..4)];
        let k = rng.random_range(2..=pool.len());
        let rows = rng.random_range(1..=5);
        let cfg = special_case_config(size);
        let f = Featurizer::new(&cfg.molecule_fp, &[]).map_err(|e| e.to_string())?;
        let templates: Vec<ReactionTemplate> = pool[..k].iter().enumerate().map(|(i, t)| t.clone().with_id(i)).collect();
        let mut m = MhnModel::new(cfg, f, templates, draw).map_err(|e| e.to_string())?;
        let eye = Tensor2::from_mat(&Mat::identity(size));
        set_param(&mut m, "hop.0.wm", eye.clone());
        set_param(&mut m, "hop.0.wt", eye);
        m.build_memory();
        let fps = Mat::from_vec(rows, size, (0..rows * size).map(|_| rng.random_range(0..2) as f64).collect());
        let p = m.score_fps(&fps).map_err(|e| e.to_string())?;
        let t = &m.template_inputs()[0];
        for r in 0..rows {
            let z: Vec<f64> = (0..k).map(|j| dot(t.row(j), fps.row(r))).collect();
            for (a, b) in p.row(r).iter().zip(softmax(&z)) {
                worst = worst.max((a - b).abs());
            }
        }
    }

    // One-hot templates through a linear encoder give the feed-forward
    // classifier softmax(W h) with W the encoder weights.
    let mut worst_dnn: f64 = 0.0;
    for draw in 0..10u64 {
        let (size, d) = (32, 12);
        let k = 5 + draw as usize;
        let mut cfg = special_case_config(size);
        cfg.molecule_encoder.layers = vec![d];
        cfg.template_encoder.layers = vec![d];
        cfg.template_fps[0].kind = TemplateFpKind::OneHot;
        cfg.hopfield.d = d;
        let f = Featurizer::new(&cfg.molecule_fp, &[]).map_err(|e| e.to_string())?;
        let templates: Vec<ReactionTemplate> = pool[..k].iter().enumerate().map(|(i, t)| t.clone().with_id(i)).collect();
        let mut m = MhnModel::new(cfg, f, templates, draw).map_err(|e| e.to_string())?;
        let eye = Tensor2::from_mat(&Mat::identity(d));
        set_param(&mut m, "hop.0.wm", eye.clone());
        set_param(&mut m, "hop.0.wt", eye);
        set_param(&mut m, "tmpl_enc.0.0.b", Tensor2::zeros(1, d));
        m.build_memory();
        let w = m.params().value(m.param_id("tmpl_enc.0.0.w").unwrap()).to_mat();
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let fps = Mat::from_vec(1, size, (0..size).map(|_| rng.random_range(0..2) as f64).collect());
        let h = m.encode_molecules(&fps);
        // Row j of the template encoder output for one-hot input j is
        // column j of the stored (d x K) weight, i.e. W[:, j].
        let (wr, wc) = (w.rows, w.cols);
        let col = |j: usize| -> Vec<f64> {
            if wr == d {
                (0..d).map(|i| w.get(i, j)).collect()
            } else {
                w.row(j)[..wc].to_vec()
            }
        };
        let z: Vec<f64> = (0..k).map(|j| dot(&col(j), h.row(0))).collect();
        let p = m.score_fps(&fps).map_err(|e| e.to_string())?;
        for (a, b) in p.row(0).iter().zip(softmax(&z)) {
            worst_dnn = worst_dnn.max((a - b).abs());
        }
    }
    check(
        worst < 1e-6 && worst_dnn < 1e-6,
        format!("max |p - softmax(T m)| = {worst:.2e} over 100 draws; one-hot/linear vs softmax(W h) = {worst_dnn:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=64);
        let d = rng.random_range(1..=32);
        let beta = 10f64.powf(rng.random_range(-2.0..1.0));
        let scale = 10f64.powf(rng.random_range(-1.0..0.5));
        let x = Mat::from_vec(k, d, (0..k * d).map(|_| rng.random_range(-1.0..1.0) * scale).collect());
        let mut xi: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut e = hopfield_energy(&xi, &x, beta);
        for _ in 0..5 {
            xi = hopfield_update(&xi, &x, beta, 1).0;
            let next = hopfield_energy(&xi, &x, beta);
            worst = worst.max(next - e);
            e = next;
        }
    }
    check(worst <= 1e-9, format!("largest per-step energy change {worst:.3e} over 1000 draws x 5 updates"))
}

fn criterion_3() -> Outcome {
    let mols: Vec<Molecule> = ["CC=O", "CC(=O)NC", "CC(=O)OCC", "CC#N", "c1ccccc1Br", "COC", "CNC", "C=CC", "CCCl", "c1ccccc1N"]
        .iter()
        .map(|s| parse_smiles(s).unwrap())
        .collect();
    let templates: Vec<ReactionTemplate> = [
        "[C:1]=[O:2]>>[C:1][O:2]",
        "[C:1](=[O:2])[N:3]>>Cl[C:1]=[O:2].[N:3]",
        "[C:1](=[O:2])[O:3][C:4]>>[C:1](=[O:2])[O:3].[C:4]Cl",
        "[C:1]#[N:2]>>[C:1][N:2]",
        "[c:1][Br:2]>>[c:1].[Br:2]",
        "[C:1][O:2][C:3]>>[C:1][O:2].[C:3]Br",
        "[N:1][C:2]>>[N:1].[C:2]=O",
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| parse_template(s).unwrap().with_id(i).with_train_count(i as u32 % 3))
    .collect();
    let mut cfg = special_case_config(64);
    cfg.molecule_fp = MoleculeFpConfig { kind: MoleculeFpKind::Mxfp, ..Default::default() };
    cfg.molecule_fp.mxfp = retrohop::fingerprints::MxfpConfig { morgan_len: 24, path_len: 24, pair_len: 16, ..Default::default() };
    cfg.molecule_encoder = EncoderConfig { layers: vec![16], activation: Activation::Tanh, dropout: 0.0 };
    cfg.template_encoder = cfg.molecule_encoder.clone();
    cfg.template_fps =
        vec![TemplateFpConfig { kind: TemplateFpKind::Mxfp, pooling: ReactantPooling::Lgamma, noise_threshold: 0, noise_scale: 0.3 }];
    cfg.hopfield = HopfieldConfig {
        d: 8,
        beta: 0.5,
        heads: 2,
        num_layers: 2,
        normalize_input: true,
        normalize_projection: true,
        association_activation: Activation::Tanh,
        layer_pooling: LayerPooling::Learned,
        dropout: 0.1,
        ..cfg.hopfield
    };
    let f = Featurizer::new(&cfg.molecule_fp, &mols).map_err(|e| e.to_string())?;
    let m = MhnModel::new(cfg, f, templates, 11).map_err(|e| e.to_string())?;
    if !m.template_noise().iter().any(|n| n.data.iter().any(|&v| v != 0.0)) {
        return Err("template noise is not active".into());
    }
    let fps = m.featurizer().molecules(&mols.iter().collect::<Vec<_>>());
    let labels: Vec<Vec<usize>> = (0..mols.len()).map(|i| vec![i % 7]).collect();
    let mut store = m.params().clone();
    let report = grad_check(
        &mut store,
        |s| {
            let mut tape = Tape::new(DropoutMode::Keyed { seed: 1, epoch: 0, batch: 0 });
            let x = tape.input(fps.clone());
            let p = m.probabilities(&mut tape, s, x);
            let loss = tape.label_mass_nll(p, labels.clone());
            (tape, loss)
        },
        GradCheckOptions { coords_per_param: 64, ..Default::default() },
    )
    .map_err(|e| e.to_string())?;
    check(
        report.max_rel_error < 1e-4,
        format!(
            "max relative error {:.2e} over {} coordinates (worst {}[{}])",
            report.max_rel_error, report.coords_checked, report.worst_param, report.worst_index
        ),
    )
}

/// Distinct products of a synthetic corpus.
fn distinct_products(records: &[ReactionRecord], limit: usize) -> Vec<Molecule> {
    let mut seen = BTreeSet::new();
    records.iter().filter(|r| seen.insert(r.product.canonical_smiles())).take(limit).map(|r| r.product.clone()).collect()
}

fn criterion_4() -> Outcome {
    let mut pairs = 0usize;
    let mut matches = 0usize;
    let mut false_negatives = 0usize;
    let mut screened_out = 0usize;
    for seed in 0..2u64 {
        let corpus = synth_corpus(40 + seed, &SynthConfig { n_templates: 500, max_count: 20, ..Default::default() });
        let templates = corpus.index.templates();
        let mols = distinct_products(&corpus.records, 120);
        let screen = TemplateScreen::new(templates, 2048).map_err(|e| e.to_string())?;
        for m in &mols {
            let mask = screen.mask(m);
            for (k, t) in templates.iter().enumerate() {
                pairs += 1;
                let exact = subgraph_match(&t.product_pattern, m).is_some();
                matches += usize::from(exact);
                screened_out += usize::from(!mask[k]);
                if exact && !mask[k] {
                    false_negatives += 1;
                }
            }
        }
    }
    check(
        pairs >= 100_000 && false_negatives == 0 && matches > 0,
        format!("{pairs} pairs, {matches} exact matches, {screened_out} screened out, {false_negatives} false negatives"),
    )
}

fn criterion_5() -> Outcome {
    let corpus = synth_corpus(5, &SynthConfig { n_templates: 500, max_count: 20, ..Default::default() });
    let templates = corpus.index.templates();
    let mols = distinct_products(&corpus.records, 200);
    if templates.len() < 500 || mols.len() < 200 {
        return Err(format!("corpus too small: {} templates, {} molecules", templates.len(), mols.len()));
    }
    let build = |mode| {
        let opts = BuildOptions { mode, workers: 1, ..Default::default() };
        let mut best = f64::INFINITY;
        let mut matrix = None;
        for _ in 0..3 {
            let t = Instant::now();
            let m = build_applicability_matrix_with(templates, &mols, &opts).unwrap();
            best = best.min(t.elapsed().as_secs_f64());
            matrix = Some(m);
        }
        (matrix.unwrap(), best)
    };
    let (exact, t_exact) = build(ScreenMode::ExactOnly);
    let (screened, t_screen) = build(ScreenMode::ScreenThenExact);
    let same = exact.rows() == screened.rows();
    let speedup = t_exact / t_screen;
    check(
        same && speedup >= 5.0,
        format!(
            "exact-only {:.1} ms, screen+exact {:.1} ms, speedup {speedup:.1}x, matrices identical: {same}, {} true entries, pass rate {:.3}",
            t_exact * 1e3,
            t_screen * 1e3,
            exact.true_count(),
            screened.stats.screen_pass_rate()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=50);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let label = rng.random_range(0..k);
        let mut one_hot = vec![0.0; k];
        one_hot[label] = 1.0;
        let a = loss_label_retrieval(&p, &one_hot).map_err(|e| e.to_string())?;
        let b = loss_ce(&p, label).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    let l11 = lgamma_pool(&[vec![1.0], vec![1.0]]).map_err(|e| e.to_string())?[0];
    let l20 = lgamma_pool(&[vec![2.0], vec![0.0]]).map_err(|e| e.to_string())?[0];
    let ok = worst <= 1e-9 && (l11 - 6f64.ln()).abs() < 1e-6 && (l20 - 3f64.ln()).abs() < 1e-6;
    check(ok, format!("max |retrieval - ce| = {worst:.1e}; pool([1,1]) = {l11:.5}, pool([2,0]) = {l20:.5}"))
}

// ---------------------------------------------------------------------------
// Synthetic-corpus experiments.

struct Prepared {
    index: TemplateIndex,
    records: Vec<ReactionRecord>,
}

fn prepare(seed: u64, cfg: &SynthConfig) -> Prepared {
    let corpus = synth_corpus(seed, cfg);
    let records = stratified_split(&corpus.records, seed);
    let index = TemplateIndex::with_records(corpus.index.templates().to_vec(), &records);
    Prepared { index, records }
}

fn long_tail_stats(p: &Prepared) -> (f64, f64) {
    let k = p.index.len() as f64;
    let rare = (0..p.index.len()).filter(|&i| p.index.train_count(i) <= 1).count() as f64;
    let zero = (0..p.index.len()).filter(|&i| p.index.train_count(i) == 0).count() as f64;
    (rare / k, zero / k)
}

fn mhn_config() -> MhnConfig {
    let mut molecule_fp = MoleculeFpConfig { kind: MoleculeFpKind::Mxfp, ..Default::default() };
    molecule_fp.mxfp = retrohop::fingerprints::MxfpConfig { morgan_len: 1024, path_len: 1024, pair_len: 512, ..Default::default() };
    let enc = EncoderConfig { layers: vec![256], activation: Activation::Relu, dropout: 0.1 };
    MhnConfig {
        molecule_fp,
        molecule_encoder: enc.clone(),
        template_fps: vec![TemplateFpConfig {
            kind: TemplateFpKind::Mxfp,
            pooling: ReactantPooling::Lgamma,
            noise_threshold: -1,
            noise_scale: 0.1,
        }],
        template_encoder: enc,
        hopfield: HopfieldConfig { d: 256, beta: 0.1, dropout: 0.1, ..Default::default() },
    }
}

fn dnn_config() -> DnnConfig {
    DnnConfig {
        molecule_fp: mhn_config().molecule_fp,
        encoder: EncoderConfig { layers: vec![256], activation: Activation::Relu, dropout: 0.1 },
    }
}

fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 64, lr: 1e-3, ..Default::default() }
}

fn data_of(f: &Featurizer, records: &[&ReactionRecord]) -> TrainData {
    let mols: Vec<&Molecule> = records.iter().map(|r| &r.product).collect();
    TrainData::new(f.molecules(&mols), records.iter().map(|r| r.template_id).collect())
}

enum Kind {
    Mhn,
    Dnn,
}

fn fit(kind: Kind, p: &Prepared, epochs: usize, seed: u64) -> Result<Box<dyn Trainable>, String> {
    let train_records = records_in(&p.records, Split::Train);
    let valid_records = records_in(&p.records, Split::Valid);
    let train_mols: Vec<Molecule> = train_records.iter().map(|r| r.product.clone()).collect();
    let templates = p.index.templates().to_vec();
    let mut model: Box<dyn Trainable> = match kind {
        Kind::Mhn => {
            let cfg = mhn_config();
            let f = Featurizer::new(&cfg.molecule_fp, &train_mols).map_err(|e| e.to_string())?;
            Box::new(MhnModel::new(cfg, f, templates, seed).map_err(|e| e.to_string())?)
        }
        Kind::Dnn => {
            let cfg = dnn_config();
            let f = Featurizer::new(&cfg.molecule_fp, &train_mols).map_err(|e| e.to_string())?;
            Box::new(DnnModel::new(cfg, f, &templates, seed).map_err(|e| e.to_string())?)
        }
    };
    let train_data = data_of(model.featurizer(), &train_records);
    let valid_data = data_of(model.featurizer(), &valid_records);
    train(model.as_mut(), &train_data, &valid_data, &train_config(epochs), seed).map_err(|e| e.to_string())?;
    Ok(model)
}

fn topk(predictions: &[RankedPrediction], records: &[&ReactionRecord], k: usize, select: &dyn Fn(usize) -> bool) -> (f64, usize) {
    let hits = template_hits(predictions, records, k).unwrap();
    let chosen: Vec<bool> = hits.iter().enumerate().filter(|(i, _)| select(*i)).map(|(_, &h)| h).collect();
    let n = chosen.len();
    (if n == 0 { f64::NAN } else { chosen.iter().filter(|&&h| h).count() as f64 / n as f64 }, n)
}

fn long_tail_config() -> SynthConfig {
    SynthConfig { n_templates: 300, max_count: 150, zero_shot_fraction: 0.15, ..Default::default() }
}

fn criterion_6() -> Outcome {
    let p = prepare(6, &long_tail_config());
    let (rare, zero) = long_tail_stats(&p);
    if p.index.len() < 100 || rare < 0.3 || zero < 0.1 {
        return Err(format!("corpus not long-tailed enough: K={}, rare {rare:.2}, zero-shot {zero:.2}", p.index.len()));
    }
    let test = records_in(&p.records, Split::Test);
    let templates = p.index.templates();
    let screen = TemplateScreen::new(templates, 2048).map_err(|e| e.to_string())?;
    let opts = PredictOptions { screen: Some(&screen), ..Default::default() };
    let mhn = fit(Kind::Mhn, &p, 30, 6)?;
    let dnn = fit(Kind::Dnn, &p, 30, 6)?;
    let pm = predict(mhn.as_ref(), templates, &test, &opts).map_err(|e| e.to_string())?;
    let pd = predict(dnn.as_ref(), templates, &test, &opts).map_err(|e| e.to_string())?;
    let pop = popularity_rank(&p.index.train_counts());
    let pp: Vec<RankedPrediction> = test
        .iter()
        .map(|r| RankedPrediction { record_id: r.id.clone(), ranking: pop_fpf(&pop, &screen, &r.product), reactant_sets: None })
        .collect();
    let buckets: Buckets = "0,1,2,3-10,11-50,>50".parse().unwrap();
    let assignment = frequency_buckets(&p.index, &test, &buckets);
    let zero_shot = |i: usize| assignment[i] == 0;
    let all = |_: usize| true;
    let (m0, n0) = topk(&pm, &test, 10, &zero_shot);
    let (d0, _) = topk(&pd, &test, 10, &zero_shot);
    let (p0, _) = topk(&pp, &test, 10, &zero_shot);
    let (ma, n) = topk(&pm, &test, 10, &all);
    let (da, _) = topk(&pd, &test, 10, &all);
    let (pa, _) = topk(&pp, &test, 10, &all);
    check(
        m0 > d0 && m0 > p0 && ma >= da,
        format!(
            "K={} rare {rare:.2} zero-shot {zero:.2}; top-10 zero-shot (n={n0}): MHN {m0:.3} DNN {d0:.3} Pop+FPF {p0:.3}; overall (n={n}): MHN {ma:.3} DNN {da:.3} Pop+FPF {pa:.3}",
            p.index.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let full = prepare(7, &long_tail_config());
    let dropped_records = drop_singleton_train_templates(&full.records);
    let dropped = Prepared {
        index: TemplateIndex::with_records(full.index.templates().to_vec(), &dropped_records),
        records: dropped_records,
    };
    let removed = full.records.len() - dropped.records.len();
    let valid = records_in(&full.records, Split::Valid);
    let test = records_in(&full.records, Split::Test);
    let templates = full.index.templates();
    let screen = TemplateScreen::new(templates, 2048).map_err(|e| e.to_string())?;
    let opts = PredictOptions { screen: Some(&screen), ..Default::default() };
    let all = |_: usize| true;
    // Mean over training seeds; a single run on ~100 validation records is too noisy.
    const SEEDS: [u64; 3] = [7, 8, 9];
    let mut scores = [(0.0, 0.0); 4];
    let mut runs = Vec::new();
    for seed in SEEDS {
        let mut row = Vec::new();
        for (i, (kind, p)) in [(Kind::Mhn, &full), (Kind::Mhn, &dropped), (Kind::Dnn, &full), (Kind::Dnn, &dropped)]
            .into_iter()
            .enumerate()
        {
            let model = fit(kind, p, 30, seed)?;
            let score = |eval: &[&ReactionRecord]| -> Result<f64, String> {
                let pred = predict(model.as_ref(), templates, eval, &opts).map_err(|e| e.to_string())?;
                Ok(topk(&pred, eval, 10, &all).0)
            };
            let (v, t) = (score(&valid)?, score(&test)?);
            scores[i].0 += v / SEEDS.len() as f64;
            scores[i].1 += t / SEEDS.len() as f64;
            row.push(format!("{v:.3}"));
        }
        runs.push(format!("seed {seed}: [{}]", row.join(" ")));
    }
    let [m_full, m_drop, d_full, d_drop] = scores;
    check(
        m_drop.0 < m_full.0 && d_drop.0 >= d_full.0,
        format!(
            "{removed} singleton records removed; mean validation top-10 (n={}): MHN {:.3} -> {:.3}, DNN {:.3} -> {:.3}; \
             test top-10 (n={}): MHN {:.3} -> {:.3}, DNN {:.3} -> {:.3}; per-seed validation [MHN full, MHN drop, DNN full, DNN drop] {}",
            valid.len(),
            m_full.0,
            m_drop.0,
            d_full.0,
            d_drop.0,
            test.len(),
            m_full.1,
            m_drop.1,
            d_full.1,
            d_drop.1,
            runs.join("; ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let p = prepare(9, &SynthConfig { n_templates: 200, max_count: 60, ..Default::default() });
    let model = fit(Kind::Mhn, &p, 5, 9)?;
    let test = records_in(&p.records, Split::Test);
    let templates = p.index.templates();
    let run = |fpf: bool| {
        let opts = BenchOptions { fpf, repeats: 5, warmup: 1, workers: 1, ..Default::default() };
        bench_inference(model.as_ref(), templates, &test, &opts).map_err(|e| e.to_string())
    };
    let on = run(true)?;
    let off = run(false)?;
    let (con, coff) = (on.curve(), off.curve());
    // Wall-clock noise: a later budget may be at most 10% faster.
    let monotone = |c: &[&retrohop::eval::BenchRow]| c.windows(2).all(|w| w[1].mols_per_sec <= w[0].mols_per_sec * 1.10);
    let fewer = con.iter().zip(&coff).all(|(a, b)| a.executions < b.executions);
    let describe = |c: &[&retrohop::eval::BenchRow]| {
        c.iter().map(|r| format!("{}:{:.0}/s,{}ex", r.budget, r.mols_per_sec, r.executions)).collect::<Vec<_>>().join(" ")
    };
    let phases_ok = on.rows.iter().chain(&off.rows).all(|r| r.phases.sum() <= r.wall && r.mols_per_sec > 0.0);
    check(
        monotone(&con) && monotone(&coff) && fewer && phases_ok,
        format!("{} products; FPF on [{}]; FPF off [{}]", test.len(), describe(&con), describe(&coff)),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 10\nworkers = 1\n[synth]\nn_templates = 80\nmax_count = 30\n[mhn.molecule_fp]\nsize = 1024\n\
         [mhn.hopfield]\nd = 64\nbeta = 0.2\n[train]\nepochs = 5\nbatch_size = 64\nlr = 1e-3\n[eval]\nks = [1, 5, 10, 50]\nbudget = 10\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<Vec<u8>, String> {
        let base = dir.path().join(tag);
        let p = |s: &str| base.join(s).display().to_string();
        let cfg = config.display().to_string();
        let steps: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--out".into(), p("corpus")],
            vec![
                "split".into(),
                "--reactions".into(),
                p("corpus/reactions.tsv"),
                "--templates".into(),
                p("corpus/templates.tsv"),
                "--out".into(),
                p("split"),
            ],
            vec![
                "train".into(),
                "--reactions".into(),
                p("split/reactions.tsv"),
                "--templates".into(),
                p("split/templates.tsv"),
                "--out".into(),
                p("model.ckpt"),
            ],
            vec![
                "evaluate".into(),
                "--model".into(),
                p("model.ckpt"),
                "--reactions".into(),
                p("split/reactions.tsv"),
                "--templates".into(),
                p("split/templates.tsv"),
                "--out".into(),
                p("metrics.csv"),
            ],
        ];
        for step in steps {
            let mut argv = vec!["retrohop".to_string(), "--config".into(), cfg.clone(), "--workers".into(), "1".into()];
            argv.extend(step.iter().cloned());
            let code = retrohop::cli::dispatch(&argv);
            if code != 0 {
                return Err(format!("`{}` exited with {code}", step.join(" ")));
            }
        }
        std::fs::read(base.join("metrics.csv")).map_err(|e| e.to_string())
    };
    let a = run("a")?;
    let b = run("b")?;
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    check(a == b && lines > 1, format!("two runs, metrics CSV {} bytes / {lines} lines each, identical: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "special-case equivalence", criterion_1),
        (2, "energy descent", criterion_2),
        (3, "gradient correctness", criterion_3),
        (4, "screen soundness", criterion_4),
        (5, "applicability speedup", criterion_5),
        (6, "zero/few-shot superiority", criterion_6),
        (7, "learning from rare templates", criterion_7),
        (8, "loss identities", criterion_8),
        (9, "speed/accuracy harness", criterion_9),
        (10, "reproducibility", criterion_10),
    ];
    let only: Option<BTreeSet<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed.push(id.to_string());
                println!("criterion {id:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {}/{ran} passed", ran - failed.len());
    if !failed.is_empty() {
        println!("acceptance: FAILED criteria: {}", failed.join(","));
        // Results are reported, not gated, unless strict mode is requested.
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}

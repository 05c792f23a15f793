use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{CliError, Command, DataArgs, ModelKind, RunConfig};
use crate::chemgraph::{parse_smiles, Molecule, ReactionTemplate};
use crate::data::{
    frequency_buckets, load_reactions, records_in, reactions_text, stratified_split, synth_corpus, templates_text, Buckets, Corpus,
    ReactionRecord, Split, TemplateIndex,
};
use crate::eval::{
    bench_csv, bench_inference, execute_ranking, export_embeddings, metrics_csv, pop_app, pop_fpf,
    popularity_rank, predict, rank_batch, reactant_hits, template_hits, BenchOptions, MetricRow, PredictOptions, RankedPrediction,
};
use crate::model::{
    load_checkpoint, pretrain_applicability, save_checkpoint, train, Checkpoint, DnnModel, Featurizer, MhnModel, StoredModel,
    TrainData,
};
use crate::screen::{build_applicability_matrix_with, BuildOptions, ScreenMode, TemplateScreen};

type Result<T> = std::result::Result<T, CliError>;

fn need(path: &Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.clone().or_else(|| fallback.clone()).ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn load_corpus(data: &DataArgs, cfg: &RunConfig) -> Result<Corpus> {
    let reactions = need(&data.reactions, &cfg.paths.reactions, "reactions")?;
    let templates = need(&data.templates, &cfg.paths.templates, "templates")?;
    let corpus = load_reactions(&reactions, &templates)?;
    if !corpus.rejects.is_empty() || !corpus.template_rejects.is_empty() {
        eprintln!(
            "warning: {} reaction and {} template rows rejected (see `ingest`)",
            corpus.rejects.len(),
            corpus.template_rejects.len()
        );
    }
    Ok(corpus)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write_corpus(dir: &Path, records: &[ReactionRecord], index: &TemplateIndex) -> Result<()> {
    write_file(&dir.join("templates.tsv"), &templates_text(index))?;
    write_file(&dir.join("reactions.tsv"), &reactions_text(records))
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Usage(format!("--{what} expects positive integers separated by commas, got {text:?}")))
}

fn parse_split(text: &str) -> Result<Split> {
    text.parse().map_err(CliError::Usage)
}

fn load_model(path: &Option<PathBuf>, cfg: &RunConfig) -> Result<Checkpoint> {
    let path = need(path, &cfg.paths.model, "model")?;
    let mut ckpt = load_checkpoint(&path)?;
    ckpt.model.as_trainable_mut().finalize();
    Ok(ckpt)
}

/// The checkpoint's template ids must line up with the corpus.
fn check_alignment(ckpt: &Checkpoint, index: &TemplateIndex) -> Result<()> {
    let same = ckpt.templates.len() == index.len()
        && ckpt.templates.iter().zip(index.templates()).all(|(a, b)| a.source_text() == b.source_text());
    if same {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "checkpoint templates ({}) do not match the template file ({}); use the file the model was trained with",
            ckpt.templates.len(),
            index.len()
        )))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Domain(e.to_string()))
}

pub(super) fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    pool(cfg.workers)?.install(|| match command {
        Command::Synth { out } => synth(out, cfg),
        Command::Ingest { data, out } => ingest(data, out, cfg),
        Command::Split { data, out } => split(data, out, cfg),
        Command::Applicability { data, out, split, mode } => applicability(data, out, split, mode, cfg),
        Command::Train { data, out } => train_cmd(data, out, cfg),
        Command::Evaluate { model, data, split, k, budget, out } => evaluate(model, data, split, k, *budget, out, cfg),
        Command::Rank { model, smiles, top, budget } => rank(model, smiles, *top, *budget, cfg),
        Command::Bench { model, data, split, budgets, no_fpf, out } => bench(model, data, split, budgets, *no_fpf, out, cfg),
        Command::ExportEmbeddings { model, out } => export(model, out, cfg),
    })
}

fn synth(out: &Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let dir = need(out, &cfg.paths.out, "out")?;
    let corpus = synth_corpus(cfg.seed, &cfg.synth);
    write_corpus(&dir, &corpus.records, &corpus.index)?;
    let zero_shot = corpus.records.iter().filter(|r| r.split == Some(Split::Test)).count();
    eprintln!(
        "synth: {} templates, {} reactions ({zero_shot} held out as zero-shot test) -> {}",
        corpus.index.len(),
        corpus.records.len(),
        dir.display()
    );
    Ok(())
}

fn ingest(data: &DataArgs, out: &Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(data, cfg)?;
    eprintln!("ingest: {} reactions, {} templates", corpus.records.len(), corpus.index.len());
    if let Some(dir) = out.clone().or_else(|| cfg.paths.out.clone()) {
        write_corpus(&dir, &corpus.records, &corpus.index)?;
        write_file(&dir.join("rejects.tsv"), &corpus.rejects_report())?;
    } else {
        eprint!("{}", corpus.rejects_report());
    }
    Ok(())
}

fn split(data: &DataArgs, out: &Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let dir = need(out, &cfg.paths.out, "out")?;
    let corpus = load_corpus(data, cfg)?;
    let records = stratified_split(&corpus.records, cfg.seed);
    let mut index = corpus.index.clone();
    index.recount(&records);
    write_corpus(&dir, &records, &index)?;
    let n = |s| records.iter().filter(|r| r.split == Some(s)).count();
    eprintln!("split: train {} / valid {} / test {}", n(Split::Train), n(Split::Valid), n(Split::Test));
    Ok(())
}

fn applicability(data: &DataArgs, out: &Option<PathBuf>, split: &str, mode: &str, cfg: &RunConfig) -> Result<()> {
    let path = need(out, &cfg.paths.out, "out")?;
    let mode = match mode {
        "screen" => ScreenMode::ScreenOnly,
        "screen-exact" => ScreenMode::ScreenThenExact,
        "exact" => ScreenMode::ExactOnly,
        other => return Err(CliError::Usage(format!("--mode must be screen, screen-exact or exact, got {other:?}"))),
    };
    let corpus = load_corpus(data, cfg)?;
    let split = parse_split(split)?;
    let mols: Vec<Molecule> = records_in(&corpus.records, split).iter().map(|r| r.product.clone()).collect();
    let opts = BuildOptions { mode, width: cfg.eval.screen_width, ..Default::default() };
    let matrix = build_applicability_matrix_with(corpus.index.templates(), &mols, &opts)?;
    write_file(&path, &matrix.to_text())?;
    eprintln!("applicability: {}", matrix.stats.summary());
    Ok(())
}

fn train_data(featurizer: &Featurizer, records: &[&ReactionRecord]) -> TrainData {
    let products: Vec<&Molecule> = records.iter().map(|r| &r.product).collect();
    TrainData::new(featurizer.molecules(&products), records.iter().map(|r| r.template_id).collect())
}

fn train_cmd(data: &DataArgs, out: &Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let path = need(out, &cfg.paths.model, "out")?;
    let corpus = load_corpus(data, cfg)?;
    let train_records = records_in(&corpus.records, Split::Train);
    let valid_records = records_in(&corpus.records, Split::Valid);
    if train_records.is_empty() {
        return Err(CliError::Domain("no training records; run `split` first".into()));
    }
    let templates: Vec<ReactionTemplate> = corpus.index.templates().to_vec();
    let train_mols: Vec<Molecule> = train_records.iter().map(|r| r.product.clone()).collect();
    let mut model = match cfg.model {
        ModelKind::Mhn => {
            let featurizer = Featurizer::new(&cfg.mhn.molecule_fp, &train_mols)?;
            StoredModel::Mhn(MhnModel::new(cfg.mhn.clone(), featurizer, templates.clone(), cfg.seed)?)
        }
        ModelKind::Dnn => {
            let featurizer = Featurizer::new(&cfg.dnn.molecule_fp, &train_mols)?;
            StoredModel::Dnn(DnnModel::new(cfg.dnn.clone(), featurizer, &templates, cfg.seed)?)
        }
    };
    let m = model.as_trainable_mut();
    let train_set = train_data(m.featurizer(), &train_records);
    let valid_set = train_data(m.featurizer(), &valid_records);
    if cfg.train.pretrain_epochs > 0 {
        let opts = BuildOptions { width: cfg.eval.screen_width, ..Default::default() };
        let matrix = build_applicability_matrix_with(&templates, &train_mols, &opts)?;
        let losses = pretrain_applicability(m, &train_set.fps, &matrix, &cfg.train, cfg.seed)?;
        for (e, l) in losses.iter().enumerate() {
            eprintln!("pretrain epoch {e}: loss {l:.5}");
        }
    }
    let report = train(m, &train_set, &valid_set, &cfg.train, cfg.seed)?;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for e in &report.epochs {
        eprintln!(
            "epoch {}: train loss {:.5}  valid loss {}  top1 {}  top10 {}",
            e.epoch,
            e.train_loss,
            opt(e.val_loss),
            opt(e.val_top1),
            opt(e.val_top10)
        );
    }
    let snapshot = serde_json::to_value(cfg).map_err(|e| CliError::Domain(e.to_string()))?;
    save_checkpoint(&path, &model, &templates, snapshot)?;
    eprintln!("train: best epoch {:?}, checkpoint -> {}", report.best_epoch, path.display());
    Ok(())
}

fn metric_rows(
    method: &str,
    ks: &[usize],
    hits_at: &dyn Fn(usize) -> Result<Vec<bool>>,
    assignment: &[usize],
    labels: &[String],
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        let hits = hits_at(k)?;
        let n_hit = hits.iter().filter(|&&h| h).count();
        rows.push(MetricRow::overall(method, k, n_hit, hits.len()));
        let mut per = vec![(0usize, 0usize); labels.len()];
        for (&b, &h) in assignment.iter().zip(&hits) {
            per[b].0 += usize::from(h);
            per[b].1 += 1;
        }
        for (label, (h, n)) in labels.iter().zip(per) {
            rows.push(MetricRow { bucket: label.clone(), ..MetricRow::overall(method, k, h, n) });
        }
    }
    Ok(rows)
}

fn fixed_rankings(records: &[&ReactionRecord], rank: impl Fn(&Molecule) -> Vec<usize> + Sync) -> Vec<RankedPrediction> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| RankedPrediction { record_id: r.id.clone(), ranking: rank(&r.product), reactant_sets: None })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    model: &Option<PathBuf>,
    data: &DataArgs,
    split: &Option<String>,
    k: &Option<String>,
    budget: Option<usize>,
    out: &Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<()> {
    let ckpt = load_model(model, cfg)?;
    let corpus = load_corpus(data, cfg)?;
    check_alignment(&ckpt, &corpus.index)?;
    let split = parse_split(split.as_deref().unwrap_or(&cfg.eval.split))?;
    let ks = match k {
        Some(text) => parse_list(text, "k")?,
        None => cfg.eval.ks.clone(),
    };
    let budget = budget.unwrap_or(cfg.eval.budget);
    let buckets: Buckets = cfg.eval.buckets.parse().map_err(|e: crate::data::DataError| CliError::Usage(e.to_string()))?;
    let records = records_in(&corpus.records, split);
    if records.is_empty() {
        return Err(CliError::Domain(format!("no records in split {split}")));
    }
    let assignment = frequency_buckets(&corpus.index, &records, &buckets);
    let labels = buckets.labels();
    let templates = &ckpt.templates;
    let model = ckpt.model.as_trainable();
    let name = match ckpt.model {
        StoredModel::Mhn(_) => "mhn",
        StoredModel::Dnn(_) => "dnn",
    };
    let screen = if cfg.eval.fpf { Some(TemplateScreen::new(templates, cfg.eval.screen_width)?) } else { None };

    let mut rows = Vec::new();
    let plain = predict(model, templates, &records, &PredictOptions { batch_size: cfg.eval.batch_size, ..Default::default() })?;
    rows.extend(metric_rows(name, &ks, &|k| Ok(template_hits(&plain, &records, k)?), &assignment, &labels)?);
    let exec_opts = PredictOptions {
        batch_size: cfg.eval.batch_size,
        screen: screen.as_ref(),
        budget: (budget > 0).then_some(budget),
    };
    let screened = if screen.is_some() || budget > 0 { Some(predict(model, templates, &records, &exec_opts)?) } else { None };
    let tag = if screen.is_some() { format!("{name}+fpf") } else { name.to_string() };
    if let (Some(p), Some(_)) = (&screened, &screen) {
        rows.extend(metric_rows(&tag, &ks, &|k| Ok(template_hits(p, &records, k)?), &assignment, &labels)?);
    }

    let pop = popularity_rank(&corpus.index.train_counts());
    let pop_plain = fixed_rankings(&records, |_| pop.clone());
    rows.extend(metric_rows("pop", &ks, &|k| Ok(template_hits(&pop_plain, &records, k)?), &assignment, &labels)?);
    if let Some(screen) = &screen {
        let pf = fixed_rankings(&records, |m| pop_fpf(&pop, screen, m));
        rows.extend(metric_rows("pop+fpf", &ks, &|k| Ok(template_hits(&pf, &records, k)?), &assignment, &labels)?);
    }
    let pa = fixed_rankings(&records, |m| pop_app(&pop, templates, m));
    rows.extend(metric_rows("pop+app", &ks, &|k| Ok(template_hits(&pa, &records, k)?), &assignment, &labels)?);

    if let (Some(p), true) = (&screened, budget > 0) {
        let method = format!("{tag}/reactants");
        let ks_in: Vec<usize> = ks.iter().copied().filter(|&k| k <= budget).collect();
        rows.extend(metric_rows(&method, &ks_in, &|k| Ok(reactant_hits(p, &records, k)?), &assignment, &labels)?);
    }

    let csv = metrics_csv(&rows);
    match out.clone().or_else(|| cfg.paths.out.clone()) {
        Some(path) => {
            write_file(&path, &csv)?;
            let mut summary = String::new();
            let _ = writeln!(summary, "split = {split}");
            let _ = writeln!(summary, "records = {}", records.len());
            for r in rows.iter().filter(|r| r.bucket == "all") {
                let acc = r.accuracy.map_or("null".to_string(), |a| format!("{a:.6}"));
                let _ = writeln!(summary, "{}.top{} = {acc}", r.method, r.k);
            }
            let _ = writeln!(summary, "eval_config = {}", serde_json::to_string(cfg).unwrap_or_default());
            let _ = writeln!(summary, "train_config = {}", ckpt.meta.run_config);
            write_file(&path.with_extension("txt"), &summary)?;
            eprintln!("evaluate: {} rows -> {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn rank(model: &Option<PathBuf>, smiles: &str, top: usize, budget: Option<usize>, cfg: &RunConfig) -> Result<()> {
    let ckpt = load_model(model, cfg)?;
    let product = parse_smiles(smiles).map_err(|e| CliError::Domain(format!("{smiles}: {e}")))?;
    let model = ckpt.model.as_trainable();
    let fps = model.featurizer().molecules(&[&product]);
    let scores = model.score_fps(&fps)?;
    let mut ranking = rank_batch(model, &fps, 1)?.remove(0);
    if cfg.eval.fpf {
        let screen = TemplateScreen::new(&ckpt.templates, cfg.eval.screen_width)?;
        ranking = pop_fpf(&ranking, &screen, &product);
    }
    for (i, &t) in ranking.iter().take(top).enumerate() {
        println!("{}\t{}\t{:.6}\t{}", i + 1, t, scores.get(0, t), ckpt.templates[t].source_text());
    }
    if let Some(budget) = budget {
        for set in execute_ranking(&ckpt.templates, &ranking, &product, budget).sets {
            println!("reactants\t{}", set.canonical());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    model: &Option<PathBuf>,
    data: &DataArgs,
    split: &Option<String>,
    budgets: &Option<String>,
    no_fpf: bool,
    out: &Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<()> {
    let ckpt = load_model(model, cfg)?;
    let corpus = load_corpus(data, cfg)?;
    check_alignment(&ckpt, &corpus.index)?;
    let split = parse_split(split.as_deref().unwrap_or(&cfg.eval.split))?;
    let records = records_in(&corpus.records, split);
    let opts = BenchOptions {
        budgets: match budgets {
            Some(text) => parse_list(text, "budgets")?,
            None => cfg.eval.bench_budgets.clone(),
        },
        workers: cfg.workers,
        fpf: cfg.eval.fpf && !no_fpf,
        screen_width: cfg.eval.screen_width,
        repeats: cfg.eval.bench_repeats,
        warmup: cfg.eval.bench_warmup,
        batch_size: cfg.eval.batch_size,
    };
    let report = bench_inference(ckpt.model.as_trainable(), &ckpt.templates, &records, &opts)?;
    for r in report.curve() {
        eprintln!(
            "budget {:>3}: {:>9.1} mol/s  top-{} {:.4}  executions {}  (fp {:.3}s fwd {:.3}s fpf {:.3}s exec {:.3}s)",
            r.budget, r.mols_per_sec, r.k, r.accuracy, r.executions, r.phases.fingerprint, r.phases.forward, r.phases.fpf,
            r.phases.execution
        );
    }
    let csv = bench_csv(&report);
    match out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn export(model: &Option<PathBuf>, out: &Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let ckpt = load_model(model, cfg)?;
    let path = need(out, &cfg.paths.out, "out")?;
    match &ckpt.model {
        StoredModel::Mhn(m) => Ok(export_embeddings(m, &path)?),
        StoredModel::Dnn(_) => Err(CliError::Domain("the feed-forward baseline has no template representations".into())),
    }
}

//! Command-line entry point: `retrohop <subcommand> [options]`.
//!
//! Exit codes: 0 success, 1 domain error (bad data, failed training, ...),
//! 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

pub use config::{EvalConfig, ModelKind, PathsConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "retrohop", version, about = "Template relevance prediction for single-step retrosynthesis")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.lr=1e-3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// Reaction file (id, reaction SMILES, template id[, split]).
    #[arg(long, value_name = "FILE")]
    pub reactions: Option<PathBuf>,
    /// Template file (id, template, count).
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic long-tailed corpus.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Validate and canonicalize a corpus, reporting rejected rows.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Assign train/valid/test splits stratified by template.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Build the template applicability matrix for one split's products.
    Applicability {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
        /// screen (filter only), screen-exact, or exact.
        #[arg(long, default_value = "screen-exact")]
        mode: String,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Template (and reactant) top-k accuracy with popularity baselines.
    Evaluate {
        #[arg(long, value_name = "CKPT")]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: Option<String>,
        /// Comma-separated cutoffs, e.g. `1,10,100`.
        #[arg(long, value_name = "K,...")]
        k: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        /// Metrics CSV; a key-value summary is written next to it.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Rank templates for one product.
    Rank {
        #[arg(long, value_name = "CKPT")]
        model: Option<PathBuf>,
        #[arg(long)]
        smiles: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Inference throughput per reactant-set budget.
    Bench {
        #[arg(long, value_name = "CKPT")]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: Option<String>,
        #[arg(long, value_name = "B,...")]
        budgets: Option<String>,
        #[arg(long)]
        no_fpf: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write the learned template representations.
    ExportEmbeddings {
        #[arg(long, value_name = "CKPT")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.to_string())
    }
}

/// Effective configuration: file, then overrides, then `--seed`/`--workers`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides).map_err(CliError::Usage)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if cfg.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(cfg)
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match resolve_config(&cli).and_then(|cfg| commands::run(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let mut cmd = Cli::command();
            let _ = cmd.error(clap::error::ErrorKind::MissingRequiredArgument, msg).print();
            2
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

//! `credit` command-line driver: ingest, train, compare, sweep, explain and
//! predict over Home-Credit-shaped CSV files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use credit_core::Result;

use commands::ExplainArgs;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "credit", version, about = "Credit-default modeling pipeline")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config training file.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic application table and bureau table.
    GenerateSample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = config::DEFAULT_SEED)]
        seed: u64,
    },
    /// Load, type and join the input tables; write the result and a summary.
    Ingest(RunArgs),
    /// Fit one pipeline, evaluate it and save the model artifact.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Train this kind with default hyperparameters instead of the
        /// config's first model.
        #[arg(long)]
        model: Option<String>,
    },
    /// Evaluate every configured model on one shared split.
    Compare(RunArgs),
    /// Evaluate one tree-based model across maximum depths.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
    /// SHAP summary, gain importance and dependency data for a tree model.
    Explain {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Auxiliary tables the model was trained with.
        #[arg(long)]
        aux: Vec<PathBuf>,
        #[arg(long)]
        summary: bool,
        #[arg(long, value_name = "FEATURE")]
        dependency: Option<String>,
        #[arg(long, value_name = "FEATURE", requires = "dependency")]
        color: Option<String>,
        #[arg(long)]
        svg: bool,
        /// Features shown in the summary plot.
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score a CSV with a saved artifact.
    Predict {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        aux: Vec<PathBuf>,
        /// Output CSV of `<id>,probability`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &run.out {
        cfg.output_dir = out.clone();
    }
    if let Some(data) = &run.data {
        cfg.data.train = data.clone();
    }
    Ok(cfg)
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenerateSample { out, rows, seed } => commands::generate_sample(&out, rows, seed).map(|_| ()),
        Command::Ingest(run) => commands::cmd_ingest(&load(&run)?),
        Command::Train { run, model } => {
            let mut cfg = load(&run)?;
            if let Some(kind) = model {
                cfg.models = vec![commands::parse_kind(&kind)?];
            }
            commands::cmd_train(&cfg)
        }
        Command::Compare(run) => commands::cmd_compare(&load(&run)?),
        Command::Sweep { run, depths } => {
            let mut cfg = load(&run)?;
            if let Some(d) = depths {
                cfg.depths = d;
            }
            commands::cmd_sweep(&cfg)
        }
        Command::Explain { artifact, data, aux, summary, dependency, color, svg, top, out } => {
            commands::cmd_explain(&ExplainArgs { artifact, data, aux, summary, dependency, color, svg, top, out })
        }
        Command::Predict { artifact, data, aux, out } => commands::cmd_predict(&artifact, &data, &aux, &out),
    }
}

/// Run a parsed command line; returns the process exit code. Errors are
/// reported as one JSON line on stderr.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(credit_core::Error::Config(format!("thread pool: {e}"))),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", output::error_line(&e));
            output::exit_code(&e)
        }
    }
}

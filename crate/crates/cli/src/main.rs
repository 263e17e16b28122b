//! Command-line driver for the transfer benchmark.
//!
//! The pipeline runs in stages, each writing into the same output
//! directory: `gen-data` (or `ingest`) -> `train-all` -> `tune-attacks` ->
//! `run-matrix` -> `report`. Exit codes: 0 success, 1 configuration error,
//! 2 missing prerequisite, 3 runtime failure.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dumb", version, about = "adversarial-transferability benchmark pipeline")]
struct Cli {
    /// Run configuration (JSON); omitted fields take built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configuration's master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Output directory; one configuration per directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Accept cached work already in the output directory.
    #[arg(long, global = true)]
    resume: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic datasets for every configured (task, source).
    GenData,
    /// Import a folder of class-labelled PNGs as one (task, source) dataset.
    Ingest {
        /// Task the images belong to.
        #[arg(long)]
        task: String,
        /// Source slot to store the dataset under.
        #[arg(long)]
        source: String,
        /// Folder with one subdirectory per class name.
        dir: PathBuf,
    },
    /// Train one model per (task, source, balance, architecture) slot.
    TrainAll,
    /// Tune every attack per (task, source) under the perceptual floor.
    TuneAttacks,
    /// Evaluate every tuned attack against every target model.
    RunMatrix,
    /// Reduce the result table to figures, score tables, and a digest.
    Report,
}

/// A stage failure with its exit code: configuration trouble (1), a missing
/// prerequisite stage (2), or a runtime error (3).
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Missing(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Missing(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Missing(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<dumb_core::Error> for Failure {
    fn from(e: dumb_core::Error) -> Self {
        match e {
            dumb_core::Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be positive".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    let cfg = config::RunConfig::load(cli.config.as_deref(), cli.seed)?;
    config::claim_out_dir(&cli.out, &cfg)?;
    match &cli.command {
        Command::GenData => stages::gen_data(&cli.out, &cfg),
        Command::Ingest { task, source, dir } => stages::ingest(&cli.out, &cfg, task, source, dir),
        Command::TrainAll => stages::train_all(&cli.out, &cfg),
        Command::TuneAttacks => stages::tune_attacks(&cli.out, &cfg),
        Command::RunMatrix => stages::run_matrix(&cli.out, &cfg, cli.resume),
        Command::Report => stages::report(&cli.out, &cfg),
    }
}

mod cohort;
mod config;
mod evaluate;
mod features;
mod phantom;
mod track;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "tractfeat", version, about = "Lesion tractography features and mRS outcome prediction")]
struct Cli {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for the forests and the synthetic cohort.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for tracking and forest training.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Exit with status 1 when any degenerate-data warning was raised.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic peak field with known geometry.
    Phantom(phantom::PhantomArgs),
    /// Whole-brain tracking, lesion filtering and pruning.
    Track(track::TrackArgs),
    /// Per-lesion feature extraction into a TSV table.
    Features(features::FeaturesArgs),
    /// RFE + leave-one-out mRS prediction per feature kind.
    Evaluate(evaluate::EvaluateArgs),
    /// Generate the synthetic evaluation cohort.
    CohortGen(cohort::CohortArgs),
}

/// What a command reports back besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub degenerate: usize,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Phantom(a) => phantom::run(a),
        Command::Track(a) => track::run(a, &cfg),
        Command::Features(a) => features::run(a, &cfg),
        Command::Evaluate(a) => evaluate::run(a, &cfg),
        Command::CohortGen(a) => cohort::run(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let strict = cli.strict;
    match run(cli) {
        Ok(o) if o.degenerate > 0 && strict => {
            warn!("{} degenerate-data warning(s) with --strict", o.degenerate);
            ExitCode::from(1)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}

//! `sepnet`: train separable neural-network states and classify entanglement.
//!
//! Every run command reads a JSON experiment config; flags override its
//! fields. Thread count follows `RAYON_NUM_THREADS` and never changes results.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ExperimentConfig, Overrides};
use error::CliError;

#[derive(Parser)]
#[command(name = "sepnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every learner for every trial and write one CSV trace each.
    Learn(RunArgs),
    /// Compare segmented learners with the free learner and report verdicts.
    Classify(RunArgs),
    /// Sweep a state family and record relative fidelity and entanglement.
    Measure(RunArgs),
    /// Count the partitions of an n-qubit register.
    Count {
        n: usize,
        /// Only partitions into exactly this many blocks.
        k: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Mcmc,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            backend: self.backend.map(|b| match b {
                BackendArg::Exact => sepnet::Backend::Exact,
                BackendArg::Mcmc => sepnet::Backend::Mcmc,
            }),
            trials: self.trials,
        });
        if let Some(d) = &cfg.description {
            println!("# {d}");
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Learn(args) => commands::learn(&args.load()?),
        Command::Classify(args) => commands::classify_cmd(&args.load()?),
        Command::Measure(args) => commands::measure(&args.load()?),
        Command::Count { n, k } => commands::count(n, k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sepnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

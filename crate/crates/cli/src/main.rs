//! `suml`: generate planted-cue benchmarks, measure cues, split easy/hard,
//! train, evaluate, verify gradients and sweep hyperparameters.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Failure;

#[derive(Parser)]
#[command(name = "suml", version, about = "Cue-robust multiple-choice training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-cue benchmark.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank answer-side tokens by productivity.
    Analyze {
        dataset: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, default_value_t = suml::cues::DEFAULT_MIN_APPLICABILITY)]
        min_applicability: usize,
        /// Also train this many contextless probes and report their accuracy.
        #[arg(long, default_value_t = 0)]
        probes: usize,
        /// Optional file whose `probe` section configures the probes.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag an evaluation set easy/hard with contextless probes.
    Split {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints on datasets and print a comparison.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value = "table")]
        format: String,
        /// Input view: `full` or `contextless`. Defaults to the trained one.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Zero the embedding gradient to confirm the check can fail.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every point of a hyperparameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    use commands::*;
    match cli.command {
        Command::Gen { config, seed, out } => gen::run(&config, seed, out),
        Command::Analyze {
            dataset,
            top_k,
            min_applicability,
            probes,
            config,
            seed,
            out,
        } => analyze::run(analyze::Args {
            dataset,
            top_k,
            min_applicability,
            probes,
            config,
            seed,
            out,
        }),
        Command::Split {
            train,
            eval,
            seeds,
            config,
            seed,
            out,
        } => split::run(&train, &eval, seeds, config.as_deref(), seed, out),
        Command::Train { config, seed, out } => train::run(&config, seed, out),
        Command::Eval {
            checkpoints,
            datasets,
            format,
            mode,
            out,
        } => eval::run(&checkpoints, &datasets, &format, mode.as_deref(), out),
        Command::Gradcheck {
            seed,
            seeds,
            inject_fault,
            out,
        } => gradcheck::run(seed, seeds, inject_fault, out),
        Command::Sweep { config, seed, out } => sweep::run(&config, seed, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

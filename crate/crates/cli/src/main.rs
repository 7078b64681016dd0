//! `hierex`: run declarative experiments from the command line.
//!
//! Exit codes: 0 on success, 2 when the config or flags are invalid, 3 when a
//! ladder entry exceeds the leaf budget, 1 for anything else (I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierex::runner::{run_and_persist, ExperimentConfig, ExperimentKind};
use hierex::Error;

#[derive(Parser, Debug)]
#[command(name = "hierex", version, about = "Extremes of hierarchical Gaussian fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean number of points in the window, with and without barriers.
    MeanMeasure(RunArgs),
    /// Probability that the window stays empty.
    Avoidance(RunArgs),
    /// Law of the recentered maximum against a Gumbel fit.
    MaxLaw(RunArgs),
    /// Pairs of extremal points counted by overlap.
    OverlapCensus(RunArgs),
    /// Bridge probability of staying below zero against 1/n.
    Ballot(RunArgs),
    /// Sensitivity of the bridge probability to a shifted level.
    Perturbation(RunArgs),
    /// Fit of the logarithmic correction to the mean maximum.
    LogCorrection(RunArgs),
    /// Chen–Stein bound and the Poisson avoidance gap.
    ChenSteinBudget(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::MeanMeasure(a) => (ExperimentKind::MeanMeasure, a),
            Command::Avoidance(a) => (ExperimentKind::Avoidance, a),
            Command::MaxLaw(a) => (ExperimentKind::MaxLaw, a),
            Command::OverlapCensus(a) => (ExperimentKind::OverlapCensus, a),
            Command::Ballot(a) => (ExperimentKind::Ballot, a),
            Command::Perturbation(a) => (ExperimentKind::Perturbation, a),
            Command::LogCorrection(a) => (ExperimentKind::LogCorrection, a),
            Command::ChenSteinBudget(a) => (ExperimentKind::ChenSteinBudget, a),
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML). Its `kind` must match the subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `threads`.
    #[arg(long, env = "HIEREX_THREADS")]
    threads: Option<usize>,
    /// Overrides `out`, the directory receiving results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `leaf_budget`, the largest tree (in leaves) allowed.
    #[arg(long)]
    budget: Option<u64>,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        _ => EXIT_VALIDATION,
    }
}

fn load(kind: ExperimentKind, args: RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if config.kind != kind {
        return Err(Error::Config {
            field: "kind".into(),
            message: format!(
                "config declares `{}` but the subcommand is `{}`",
                config.kind.name(),
                kind.name()
            ),
        });
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(budget) = args.budget {
        config.leaf_budget = budget;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let config = match load(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match run_and_persist(&config) {
        Ok((result, files)) => {
            println!("config hash {}", result.config_hash);
            for entry in &result.entries {
                for s in &entry.statistics {
                    let oracle = s.oracle.map(|o| format!("{o:.6}")).unwrap_or_else(|| "-".into());
                    println!(
                        "{:<12} {:<22} {:>14.6} ± {:<12.6} oracle {}",
                        entry.label, s.name, s.estimate, s.std_error, oracle
                    );
                }
            }
            println!("result {}", files.result.display());
            println!("plot   {}", files.plot.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

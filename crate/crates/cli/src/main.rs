// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment runner CLI: one subcommand per experiment kind.
//!
//! Exit codes: 0 on success, 1 on config/usage validation errors, 2 on
//! runtime failures.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use conflictlab_core::experiments::{
    default_config, load_config, run_experiment, write_outputs, ExperimentConfig, ExperimentKind,
};
use conflictlab_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "conflictlab",
    version,
    about = "Seeded toy-transformer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override (mandatory somewhere: flag or config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for results.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy of the closed-form solver on both tasks.
    SolveEval(RunArgs),
    /// Predicted vs empirical conflict winner over a constants grid.
    ConflictSweep(RunArgs),
    /// Per-head, per-conflict-type knock-out effects.
    KnockoutScan(RunArgs),
    /// Analytic gradients against finite differences.
    Gradcheck(RunArgs),
    /// Two-step training dynamics report.
    TrainDyn(RunArgs),
    /// Head identification plus intervention-method comparison.
    IdentifyCompare(RunArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::SolveEval(_) => ExperimentKind::SolveEval,
            Command::ConflictSweep(_) => ExperimentKind::ConflictSweep,
            Command::KnockoutScan(_) => ExperimentKind::KnockoutScan,
            Command::Gradcheck(_) => ExperimentKind::Gradcheck,
            Command::TrainDyn(_) => ExperimentKind::TrainDyn,
            Command::IdentifyCompare(_) => ExperimentKind::IdentifyCompare,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::SolveEval(a)
            | Command::ConflictSweep(a)
            | Command::KnockoutScan(a)
            | Command::Gradcheck(a)
            | Command::TrainDyn(a)
            | Command::IdentifyCompare(a) => a,
        }
    }
}

fn resolve_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let config = load_config(path)?;
            if config.kind != kind {
                return Err(Error::Validation(format!(
                    "config kind `{}` does not match subcommand `{}`",
                    config.kind.as_str(),
                    kind.as_str()
                )));
            }
            config
        }
        None => {
            let seed = args.seed.ok_or_else(|| {
                Error::Validation("no config given, so --seed is required".into())
            })?;
            default_config(kind, seed)
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    let kind = cli.command.kind();
    let args = cli.command.args();
    let config = resolve_config(kind, args)?;
    let rows = run_experiment(&config)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}-seed{}", kind.as_str(), config.seed)));
    let paths = write_outputs(&rows, &config, &out_dir)?;
    println!(
        "{}: {} rows -> {} ({} alongside)",
        kind.as_str(),
        rows.len(),
        paths.csv.display(),
        paths.manifest.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

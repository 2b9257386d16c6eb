//! `spaceport`: sparse partial-correlation precision estimation, Monte-Carlo
//! study tables and rolling out-of-sample backtests from the command line.
//!
//! Every subcommand writes a `manifest.json` next to its outputs with the
//! resolved configuration and SHA-256 digests of the inputs. Flags beat
//! config-file entries, which beat built-in defaults; every flag can also be
//! set through an environment variable with the `SPACEPORT_` prefix.

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`: the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod backtest;
mod estimate;
mod kv;
mod manifest;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "spaceport",
    version,
    about = "Sparse partial-correlation portfolio toolkit",
    propagate_version = true
)]
struct Cli {
    /// Cap on worker threads for replications and window fits
    /// (default: available parallelism).
    #[arg(long, global = true, env = "SPACEPORT_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator on a returns CSV and export the estimate.
    Estimate(estimate::EstimateArgs),
    /// Run a Monte-Carlo study over synthetic return processes.
    Simulate(simulate::SimulateArgs),
    /// Roll an out-of-sample backtest with transaction costs.
    Backtest(backtest::BacktestArgs),
    /// Print the artifact version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::FAILURE;
        }
        // Build the global pool up front so every parallel section
        // respects the cap.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {jobs} worker thread(s): {e}");
            return ExitCode::FAILURE;
        }
    }

    let result = match &cli.command {
        Command::Estimate(args) => estimate::run(args, cli.jobs),
        Command::Simulate(args) => simulate::run(args, cli.jobs),
        Command::Backtest(args) => backtest::run(args, cli.jobs),
        Command::Version => {
            println!("spaceport {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `jic` — decompose multi-block data into joint and individual cluster
//! structure from the command line.
//!
//! Subcommands: `select` (choose cluster numbers), `cluster` (decompose and
//! assign samples), `decompose` (factor matrices only), `simulate`
//! (benchmark harness). Every run writes a manifest that pins the inputs and
//! parameters needed to reproduce its outputs.

mod commands;
mod options;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::options::{ClusterArgs, DecomposeArgs, SelectArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(
    name = "jic",
    version,
    about = "Joint and individual clustering of multi-block data"
)]
struct Cli {
    /// Cap the worker thread count (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the number of joint and block-specific clusters.
    Select(SelectArgs),
    /// Decompose blocks and write joint and per-block cluster assignments.
    Cluster(ClusterArgs),
    /// Fit the joint/individual decomposition and write its factors.
    Decompose(DecomposeArgs),
    /// Run the simulation benchmark and write precision/recovery reports.
    Simulate(SimulateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} worker threads: {err}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Select(args) => commands::select(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Decompose(args) => commands::decompose(args),
        Command::Simulate(args) => commands::simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

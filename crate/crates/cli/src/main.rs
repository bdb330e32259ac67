//! burstq: priority-queue task models from the command line.
//!
//! Subcommands map onto the library engines: `simulate` (Monte Carlo),
//! `solve` (stationary density), `scan` (convergence region), `pmf`
//! (waiting-time distribution with envelopes), `records` (p = 1 record
//! statistics). Every run is deterministic given --seed, and every output
//! file embeds its fully resolved configuration.
//!
//! Exit codes: 0 success, 2 usage, 3 numerical divergence, 4 I/O.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "burstq", version, about = "Priority-queue task model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo simulation: waiting-time histogram and summary statistics.
    Simulate(commands::SimulateArgs),
    /// Stationary old-task density by Neumann series (density CSV + summary).
    Solve(commands::SolveArgs),
    /// Hilbert-Schmidt norm over a (p, c) grid (region CSV).
    Scan(commands::ScanArgs),
    /// Waiting-time pmf with log-log columns and, for the proportional
    /// protocol, envelope bounds (pmf CSV).
    Pmf(commands::PmfArgs),
    /// Record-process trace and asymptotic test battery (trace CSV + JSON).
    Records(commands::RecordsArgs),
}

/// Failures carrying their process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Divergence(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Divergence(m) | CliError::Io(m) => m,
        }
    }
}

impl From<burstq::Error> for CliError {
    fn from(e: burstq::Error) -> Self {
        match e {
            burstq::Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Solve(args) => commands::solve(args),
        Command::Scan(args) => commands::scan(args),
        Command::Pmf(args) => commands::pmf(args),
        Command::Records(args) => commands::records(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

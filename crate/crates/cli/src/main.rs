//! `swapnas` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or numeric error,
//! 3 oracle-check failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::OracleFailed(_) => 3,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "swapnas", version, about = "Training-free network scoring and architecture search")]
pub struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = "swapnas_out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one genome and print a JSON report.
    Score(commands::ScoreArgs),
    /// Run the evolutionary search.
    Search(commands::SearchArgs),
    /// Correlate metrics with a ground-truth accuracy table.
    Correlate(commands::CorrelateArgs),
    /// Batch-size and input-dimension sweeps.
    #[command(subcommand)]
    Ablate(commands::AblateCommand),
    /// Compare hashed pattern counts with brute-force counts on small nets.
    OracleCheck(commands::OracleArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `swapnas --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

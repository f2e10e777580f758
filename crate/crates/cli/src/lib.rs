//! Command-line front end for `hyperband-core`.
//!
//! Verbs: `brackets`, `tune`, `simulate`, `oracle`, `report`. Exit codes:
//! 0 success, 2 usage error, 3 stopped by the budget cap, 4 run failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub mod brackets;
pub mod manifest;
pub mod oracle;
pub mod report;
pub mod simulate;
pub mod tune;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRUNCATED: u8 = 3;
pub const EXIT_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "hyperband", version, about = "Hyperband and SuccessiveHalving hyperparameter search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the rung schedule of every bracket.
    Brackets(brackets::BracketsArgs),
    /// Tune a search space with an external trainer or a replay table.
    Tune(tune::TuneArgs),
    /// Run algorithms on synthetic populations and report simple regret.
    Simulate(simulate::SimulateArgs),
    /// Query losses and budget formulas.
    Oracle(oracle::OracleArgs),
    /// Summarize a trial log.
    Report(report::ReportArgs),
}

/// Bracket-shape flags shared by `brackets` and `tune`.
#[derive(Debug, Clone, Args)]
pub struct ShapeArgs {
    /// Most configurations in one bracket.
    #[arg(long = "n-max")]
    pub n_max: Option<u64>,
    /// Fewest configurations in one bracket.
    #[arg(long = "n-min")]
    pub n_min: Option<u64>,
    /// Set n_max to max(9, R/1000).
    #[arg(long = "default-n-max", conflicts_with = "n_max")]
    pub default_n_max: bool,
}

impl ShapeArgs {
    pub fn n_max(&self, max_resource: u64) -> Option<u64> {
        if self.default_n_max {
            Some(default_n_max(max_resource))
        } else {
            self.n_max
        }
    }
}

/// `max(9, R/1000)`.
pub fn default_n_max(max_resource: u64) -> u64 {
    (max_resource / 1000).max(9)
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Truncated,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Failed(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

pub fn failed(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Failed(e.into())
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Brackets(a) => brackets::run(&a),
        Command::Tune(a) => tune::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Oracle(a) => oracle::run(&a),
        Command::Report(a) => report::run(&a),
    }
}

/// Parse a snake_case enum value through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

pub fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(anyhow::anyhow!("reading {}: {e}", path.display())))
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

//! `dotanneal`: action, annealing, verification and landscape reports for the Ising and Potts
//! mean-field chains.
//!
//! Exit codes: 0 on success, 1 when a checked invariant fails, 2 on usage, precondition or
//! numerical errors. Diagnostics go to stderr as a single line.

mod args;
mod commands;
mod output;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Result of a command that ran to completion.
pub enum Outcome {
    Pass,
    /// A checked invariant did not hold; the message names it.
    Violated(String),
}

#[derive(Debug)]
pub struct CliError(pub String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<dotanneal::Error> for CliError {
    fn from(e: dotanneal::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError(format!("serialization error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError(format!("csv error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli.output_dir.clone();
    let result = match cli.command {
        Command::Action(a) => commands::action(&a, &out_dir),
        Command::Anneal(a) => commands::anneal(&a, &out_dir),
        Command::Verify(a) => verify::run(&a),
        Command::Landscape(a) => commands::landscape(&a, &out_dir),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violated(msg)) => {
            eprintln!("dotanneal: invariant failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("dotanneal: error: {}", e.0.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

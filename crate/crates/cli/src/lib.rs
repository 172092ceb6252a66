//! Command-line front end: CSV ingestion, estimation and inference commands,
//! the simulation runner, and self-describing JSON and CSV outputs.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, parse_csv, write_csv, Ingested, Schema};
pub use output::Artifact;

/// Runs one parsed command line and writes its outputs. Returns the artifact's
/// warnings and the paths written.
pub fn run(cli: &Cli) -> CliResult<(Vec<String>, Vec<PathBuf>)> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (artifact, output) = match &cli.command {
        Command::Estimate(a) => (commands::estimate(a)?, a.output.as_deref()),
        Command::Band(a) => (commands::band(a)?, a.output.as_deref()),
        Command::Simulate(a) => (commands::simulate(a)?, a.output.as_deref()),
        Command::Oracle(a) => (commands::oracle(a)?, a.output.as_deref()),
        Command::Validate(a) => (commands::validate(a)?, a.output.as_deref()),
    };
    let written = artifact.write(output)?;
    Ok((artifact.warnings, written))
}

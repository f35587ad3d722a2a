//! `dfsdca`: run the solver, inspect chunk partitions, compute reference
//! solutions and execute the validator suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 divergence or a
//! failed validation.

mod chunk_stats;
mod error;
mod reference;
mod run;
mod setup;
mod validate;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::error::{io_error, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "dfsdca",
    version,
    about = "Dual-free SDCA with arbitrary mini-batch sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the solver and write a CSV trace.
    ///
    /// Columns: t,epoch,primal,subopt,B,D,E,envelope_D,envelope_E,theta.
    /// subopt, the potentials and the envelopes are empty without a reference.
    /// With --seeds > 1 each row holds means over the seeds, followed by
    /// primal_se,subopt_se,B_se,D_se,E_se. Lines starting with `#` carry the
    /// run metadata (resolved lambda, theta, sampling summary, seeds).
    Run(run::RunArgs),
    /// Sample waiting times of tau-nice and chunked sampling.
    ///
    /// Columns: standard,chunked (max minus mean nonzeros per unit of a draw),
    /// one row per draw, then a `# mean,<standard>,<chunked>` summary line.
    /// The chunk partition is written as JSON next to the CSV.
    ChunkStats(chunk_stats::ChunkStatsArgs),
    /// Run validator suites and print a JSON report; exit 3 if any check fails.
    Validate(validate::ValidateArgs),
    /// Compute a reference solution (w*, alpha*, P*) as JSON.
    Reference(reference::ReferenceArgs),
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub(crate) fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::ChunkStats(args) => chunk_stats::cmd_chunk_stats(args),
        Command::Validate(args) => validate::cmd_validate(args),
        Command::Reference(args) => reference::cmd_reference(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `validate`: run validator suites and emit a JSON report.

use std::path::PathBuf;

use clap::Args;
use dfsdca::suites::{run_suites, SuiteOptions, SUITES};
use dfsdca::Execution;

use crate::error::{CliError, CliResult};
use crate::write_output;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Suites to run (repeatable or comma-separated; default all):
    /// eso, lemma1, lemma2, contraction, gradcheck, fixedpoint.
    #[arg(long, value_delimiter = ',')]
    pub suite: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random trials per check.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Force this stepsize in the dual/primal distance checks.
    #[arg(long)]
    pub theta: Option<f64>,
    /// JSON destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "par")]
    pub execution: Execution,
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    if let Some(bad) = args.suite.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown suite '{bad}' (expected one of {})",
            SUITES.join(", ")
        )));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let opts = SuiteOptions {
        seed: args.seed,
        trials: args.trials,
        theta: args.theta,
        exec: args.execution,
    };
    let report = run_suites(&args.suite, &opts)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Failure(format!("serializing report: {e}")))?;
    write_output(args.out.as_deref(), &(json + "\n"))?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| match &c.error {
                Some(e) => format!("{}/{}: {e}", c.suite, c.name),
                None => format!("{}/{}", c.suite, c.name),
            })
            .collect();
        Err(CliError::Failure(format!(
            "failed checks: {}",
            failed.join("; ")
        )))
    }
}

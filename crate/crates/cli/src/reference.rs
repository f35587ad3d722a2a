//! `reference`: high-accuracy minimizer for potentials and suboptimality.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use dfsdca::diagnostics::{reference_solution_with, ReferenceMethod, ReferenceOptions};

use crate::error::{CliError, CliResult};
use crate::setup::ProblemArgs;
use crate::write_output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Gd,
    Normal,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Target ‖∇P(w)‖ (default 1e-12·(1 + |P(0)|)).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    /// auto uses the normal equations for quadratic losses.
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
    /// JSON destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_reference(args: &ReferenceArgs) -> CliResult<()> {
    if let Some(tol) = args.tol {
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(CliError::Usage(format!(
                "--tol must be nonnegative, got {tol}"
            )));
        }
    }
    let problem = args.problem.build()?.problem;
    let method = match args.method {
        MethodArg::Auto => ReferenceMethod::Auto,
        MethodArg::Gd => ReferenceMethod::GradientDescent,
        MethodArg::Normal => ReferenceMethod::NormalEquations,
    };
    let reference = reference_solution_with(
        &problem,
        ReferenceOptions {
            tol: args.tol,
            max_iter: args.max_iter,
            method,
        },
    )?;
    let json = serde_json::to_string_pretty(&reference)
        .map_err(|e| CliError::Failure(format!("serializing reference: {e}")))?;
    write_output(args.out.as_deref(), &(json + "\n"))
}

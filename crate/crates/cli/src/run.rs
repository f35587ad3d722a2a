//! `run`: solve a problem and write the trace as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use dfsdca::diagnostics::{decay_envelope, reference_solution, ReferenceSolution};
use dfsdca::sampling::SchemeDescriptor;
use dfsdca::solver::{
    condition_number_importance, condition_number_uniform, iterations_for, resolve_theta,
    run_seeds, RunOutput, SolverConfig, ThetaMode, TraceRecord,
};
use dfsdca::Execution;

use crate::error::{io_error, CliError, CliResult};
use crate::setup::{loss_name, ProblemArgs};
use crate::write_output;

pub const COLUMNS: &str = "t,epoch,primal,subopt,B,D,E,envelope_D,envelope_E,theta";
const SE_COLUMNS: &str = "primal_se,subopt_se,B_se,D_se,E_se";

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// serial-uniform, serial-importance, serial-random:<c>, nice[:tau] or chunked[:tau].
    #[arg(long, default_value = "serial-uniform")]
    pub sampling: SchemeDescriptor,
    /// Mini-batch size for nice/chunked descriptors without one.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Passes over the data, counted as t·E|S|/n.
    #[arg(long, default_value_t = 10.0)]
    pub epochs: f64,
    /// Seed of the sampling (and of serial-random weights).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds seed, seed+1, ...; the CSV then holds means
    /// plus standard-error columns.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// auto-convex, auto-nonconvex or an explicit value in (0, min p_i].
    #[arg(long, default_value = "auto-convex")]
    pub theta: ThetaMode,
    /// Reference solution (JSON from the `reference` subcommand).
    #[arg(long, conflicts_with = "with_reference")]
    pub reference: Option<PathBuf>,
    /// Compute a reference solution before running.
    #[arg(long)]
    pub with_reference: bool,
    /// Iterations between checkpoints (default n).
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// CSV destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the final state of the first seed as JSON.
    #[arg(long)]
    pub state_out: Option<PathBuf>,
    /// seq or par; fans out the seeds.
    #[arg(long, default_value = "par")]
    pub execution: Execution,
}

fn load_reference(path: &PathBuf, n: usize, d: usize) -> CliResult<ReferenceSolution> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let r: ReferenceSolution = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if r.w.len() != d || r.alpha.len() != n {
        return Err(CliError::Data(format!(
            "{}: reference has dim {} and {} duals, problem has d = {d}, n = {n}",
            path.display(),
            r.w.len(),
            r.alpha.len()
        )));
    }
    Ok(r)
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Mean and standard error over seeds; `None` if any seed lacks the value.
fn aggregate(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let values: Option<Vec<f64>> = values.collect();
    let Some(values) = values else {
        return (None, None);
    };
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(se))
}

fn trace_csv(outs: &[RunOutput], theta: f64) -> CliResult<String> {
    let len = outs[0].trace.records.len();
    if outs.iter().any(|o| o.trace.records.len() != len) {
        return Err(CliError::Failure(
            "seeds produced different checkpoints".into(),
        ));
    }
    let multi = outs.len() > 1;
    let mut csv = String::new();
    csv.push_str(COLUMNS);
    if multi {
        csv.push(',');
        csv.push_str(SE_COLUMNS);
    }
    csv.push('\n');

    type Field = fn(&TraceRecord) -> Option<f64>;
    let fields: [Field; 5] = [|r| Some(r.primal), |r| r.subopt, |r| r.b, |r| r.d, |r| r.e];
    let column = |k: usize, f: Field| aggregate(outs.iter().map(|o| f(&o.trace.records[k])));
    let d0 = column(0, fields[3]).0;
    let e0 = column(0, fields[4]).0;

    for k in 0..len {
        let rec = &outs[0].trace.records[k];
        let stats: Vec<(Option<f64>, Option<f64>)> = fields.iter().map(|&f| column(k, f)).collect();
        let t = rec.t as f64;
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            rec.t,
            num(rec.epoch),
            opt(stats[0].0),
            opt(stats[1].0),
            opt(stats[2].0),
            opt(stats[3].0),
            opt(stats[4].0),
            opt(d0.map(|x| decay_envelope(x, theta, t))),
            opt(e0.map(|x| decay_envelope(x, theta, t))),
            num(theta)
        );
        if multi {
            for s in &stats {
                csv.push(',');
                csv.push_str(&opt(s.1));
            }
        }
        csv.push('\n');
    }
    Ok(csv)
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let built = args.problem.build()?;
    let problem = built.problem.with_execution(Execution::Sequential);
    let data = problem.data();
    let scheme = args.sampling.build(
        data,
        &problem.smoothness().loss,
        problem.lambda(),
        args.tau,
        args.seed,
    )?;
    let theta = resolve_theta(&problem, &scheme, args.theta)?;

    let reference = match (&args.reference, args.with_reference) {
        (Some(path), _) => Some(load_reference(path, problem.n(), problem.dim())?),
        (None, true) => Some(reference_solution(&problem, None)?),
        (None, false) => None,
    };

    let config = SolverConfig {
        theta: ThetaMode::Explicit(theta),
        epochs: args.epochs,
        seed: args.seed,
        resync_period: None,
        trace_period: args.trace_every,
    };
    let seeds: Vec<u64> = (0..args.seeds as u64)
        .map(|k| args.seed.wrapping_add(k))
        .collect();
    let outs = run_seeds(
        &problem,
        &scheme,
        &config,
        &seeds,
        reference.as_ref(),
        args.execution,
    )?;

    let minmax = |x: &[f64]| {
        x.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (p_min, p_max) = minmax(scheme.p());
    let (v_min, v_max) = minmax(scheme.v());
    let mut text = String::new();
    let _ = writeln!(text, "# dfsdca run");
    let _ = writeln!(text, "# data={}", args.problem.data.describe());
    let _ = writeln!(
        text,
        "# n={} d={} nnz={}",
        problem.n(),
        problem.dim(),
        data.total_nnz()
    );
    match built.max_norm {
        Some(m) => {
            let mode = args.problem.data.normalize_mode;
            let _ = writeln!(text, "# normalize={mode:?} max_norm_before={m}");
        }
        None => {
            let _ = writeln!(text, "# normalize=none");
        }
    }
    let _ = writeln!(text, "# loss={}", loss_name(problem.loss().kind()));
    let _ = writeln!(text, "# lambda={}", problem.lambda());
    let _ = writeln!(
        text,
        "# sampling={} expected_batch={} max_batch={}",
        scheme.label(),
        scheme.expected_size(),
        scheme.max_card()
    );
    let _ = writeln!(text, "# theta={theta} mode={:?}", args.theta);
    let (l, norms_sq) = (&problem.smoothness().loss, data.norms_sq());
    let _ = writeln!(
        text,
        "# kappa_uniform={} kappa_importance={}",
        condition_number_uniform(l, norms_sq, problem.lambda()),
        condition_number_importance(l, norms_sq, problem.lambda())
    );
    let _ = writeln!(
        text,
        "# p_min={p_min} p_max={p_max} v_min={v_min} v_max={v_max}"
    );
    let _ = writeln!(
        text,
        "# epochs={} iterations={} seed={} seeds={}",
        args.epochs,
        iterations_for(args.epochs, problem.n(), &scheme),
        args.seed,
        args.seeds
    );
    if let Some(r) = &reference {
        let _ = writeln!(
            text,
            "# reference_primal={} reference_grad_norm={}",
            r.primal, r.grad_norm
        );
    }
    text.push_str(&trace_csv(&outs, theta)?);
    write_output(args.out.as_deref(), &text)?;

    if let Some(path) = &args.state_out {
        let json = serde_json::to_string_pretty(&outs[0].state)
            .map_err(|e| CliError::Failure(format!("serializing state: {e}")))?;
        fs::write(path, json + "\n").map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

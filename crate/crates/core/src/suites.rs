//! Randomized validator suites over small instances whose samplings can be
//! enumerated exactly.
//!
//! Every check reduces a trial to a single violation measure (a discrepancy,
//! a negated slack or a relative error) and passes when the worst trial stays
//! at or below the threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{gen_synthetic, normalize, Dataset, LabelModel, NormalizeMode};
use crate::diagnostics::{
    one_step_contraction, random_consistent_state, reference_solution, reference_state,
    suboptimality_bridge, verify_lemma1_b, verify_lemma1_c, verify_lemma2, PotentialKind,
};
use crate::exec::Execution;
use crate::losses::{build_nonconvex_instance, ExampleLoss, LossSpec};
use crate::sampling::{
    chunked_sampling, importance_probabilities, naive_chunks, random_c_sampling, serial_uniform,
    serial_weighted, tau_nice, validate_eso_with, SamplingScheme,
};
use crate::solver::{
    primal_gradient, primal_value, step, theta_convex, theta_nonconvex, w_from_alpha, Problem,
};
use crate::{Error, Result};

pub const SUITES: [&str; 6] = [
    "eso",
    "lemma1",
    "lemma2",
    "contraction",
    "gradcheck",
    "fixedpoint",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub trials: usize,
    /// Largest violation measure over the trials (`None` if a trial errored
    /// before producing one).
    pub worst: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub suites: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub trials: usize,
    /// Forces this stepsize in the Lemma 1 checks instead of a random valid one.
    pub theta: Option<f64>,
    pub exec: Execution,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            theta: None,
            exec: Execution::default(),
        }
    }
}

/// Runs the named suites (all of [`SUITES`] when `names` is empty).
pub fn run_suites(names: &[String], opts: &SuiteOptions) -> Result<ValidationReport> {
    let selected: Vec<String> = if names.is_empty() {
        SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    if let Some(bad) = selected.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "unknown suite '{bad}' (expected one of {})",
            SUITES.join(", ")
        )));
    }
    let mut checks = Vec::new();
    for suite in &selected {
        checks.extend(match suite.as_str() {
            "eso" => eso_suite(opts),
            "lemma1" => lemma1_suite(opts),
            "lemma2" => lemma2_suite(opts),
            "contraction" => contraction_suite(opts),
            "gradcheck" => gradcheck_suite(opts),
            _ => fixedpoint_suite(opts),
        });
    }
    Ok(ValidationReport {
        seed: opts.seed,
        suites: selected,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn trial_rng(seed: u64, salt: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
            ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )
}

fn check<F>(
    suite: &str,
    name: &str,
    salt: u64,
    opts: &SuiteOptions,
    threshold: f64,
    f: F,
) -> CheckResult
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let outcomes = opts.exec.map(opts.trials, |trial| {
        f(&mut trial_rng(opts.seed, salt, trial))
    });
    let mut worst: Option<f64> = None;
    let mut error = None;
    for outcome in outcomes {
        match outcome {
            Ok(v) => {
                worst = Some(match worst {
                    Some(w) if !(v > w) && !v.is_nan() => w,
                    _ => v,
                })
            }
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let pass = error.is_none() && worst.is_some_and(|w| w <= threshold);
    CheckResult {
        suite: suite.into(),
        name: name.into(),
        trials: opts.trials,
        worst,
        threshold,
        pass,
        error,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossChoice {
    Logistic,
    Squared,
    QuadraticFamily,
}

/// A random problem with `2 ≤ n ≤ max_n`, `1 ≤ d ≤ 4` and `λ` log-uniform in
/// `[0.05, 2]`.
pub fn small_problem<R: Rng>(rng: &mut R, loss: LossChoice, max_n: usize) -> Result<Problem> {
    let n = rng.random_range(2..=max_n.max(2));
    let d = rng.random_range(1..=4);
    let lambda = (rng.random_range(0.05f64.ln()..2f64.ln())).exp();
    let seed: u64 = rng.random();
    let (data, spec) = match loss {
        LossChoice::Logistic => {
            let data = gen_synthetic(n, d, 0.8, LabelModel::LinearSign, seed)?;
            let spec = LossSpec::logistic(data.labels())?;
            (data, spec)
        }
        LossChoice::Squared => {
            let data = gen_synthetic(n, d, 0.8, LabelModel::LinearNoise { noise: 0.5 }, seed)?;
            let spec = LossSpec::squared(data.labels());
            (data, spec)
        }
        LossChoice::QuadraticFamily => build_nonconvex_instance(n, d, seed)?,
    };
    Problem::new(data, spec, lambda)
}

/// One of serial-uniform, serial-importance, `τ`-nice or chunked, with a
/// random valid `τ`.
pub fn small_scheme<R: Rng>(rng: &mut R, problem: &Problem) -> Result<SamplingScheme> {
    let data = problem.data();
    let n = data.n();
    match rng.random_range(0..4) {
        0 => Ok(serial_uniform(data)),
        1 => {
            let p = importance_probabilities(
                &problem.smoothness().loss,
                data.norms_sq(),
                problem.lambda(),
            )?;
            serial_weighted(&p, data)
        }
        2 => tau_nice(data, rng.random_range(1..=n)),
        _ => {
            let partition = naive_chunks(data.nnz())?;
            let tau = rng.random_range(1..=partition.k());
            chunked_sampling(&partition, tau, data)
        }
    }
}

fn pick_loss<R: Rng>(rng: &mut R, nonconvex: bool) -> LossChoice {
    match rng.random_range(0..if nonconvex { 3 } else { 2 }) {
        0 => LossChoice::Logistic,
        1 => LossChoice::Squared,
        _ => LossChoice::QuadraticFamily,
    }
}

fn eso_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let datasets = |rng: &mut ChaCha8Rng| -> Result<Dataset> {
        let n = rng.random_range(5..=40);
        let d = rng.random_range(3..=15);
        gen_synthetic(
            n,
            d,
            rng.random_range(0.1..0.7),
            LabelModel::LinearSign,
            rng.random(),
        )
    };
    let ratio_excess = |scheme: &SamplingScheme, data: &Dataset, seed: u64| -> f64 {
        let report = validate_eso_with(scheme, data, 5, seed, Execution::Sequential);
        report.ratio - 3.0 * report.stderr - 1.0
    };
    let trials = SuiteOptions {
        trials: opts.trials.min(10),
        ..*opts
    };
    let mut out = Vec::new();
    for (salt, name) in [
        (11, "serial-uniform"),
        (12, "serial-importance"),
        (13, "serial-random"),
        (14, "nice"),
        (15, "chunked"),
    ] {
        out.push(check("eso", name, salt, &trials, 1e-12, |rng| {
            let data = datasets(rng)?;
            let scheme = match name {
                "serial-uniform" => serial_uniform(&data),
                "serial-importance" => {
                    let l = vec![0.25; data.n()];
                    serial_weighted(&importance_probabilities(&l, data.norms_sq(), 0.1)?, &data)?
                }
                "serial-random" => random_c_sampling(&data, 5.0, rng.random())?,
                "nice" => tau_nice(&data, rng.random_range(1..=data.n()))?,
                _ => {
                    let partition = naive_chunks(data.nnz())?;
                    chunked_sampling(&partition, rng.random_range(1..=partition.k()), &data)?
                }
            };
            Ok(ratio_excess(&scheme, &data, rng.random()))
        }));
    }
    // Identical rows make `τ ‖A_i‖² / τ²` too small: the check must notice.
    out.push(check(
        "eso",
        "undersized-detected",
        16,
        &SuiteOptions { trials: 1, ..*opts },
        -1e-12,
        |rng| {
            let rows = vec![vec![1.0, 1.0]; 6];
            let data = Dataset::from_dense(&rows, vec![1.0; 6])?;
            let tau = 3;
            let wrong = data.norms_sq().iter().map(|s| s / tau as f64).collect();
            let scheme = tau_nice(&data, tau)?.with_eso(wrong)?;
            Ok(-ratio_excess(&scheme, &data, rng.random()))
        },
    ));
    out
}

fn lemma1_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let setup = |rng: &mut ChaCha8Rng| -> Result<_> {
        let choice = pick_loss(rng, true);
        let problem = small_problem(rng, choice, 6)?;
        let scheme = small_scheme(rng, &problem)?;
        let reference = reference_solution(&problem, None)?;
        let state = random_consistent_state(&problem, rng, 2.0)?;
        let theta = opts
            .theta
            .unwrap_or_else(|| scheme.min_p() * rng.random_range(0.01..=1.0));
        Ok((problem, scheme, reference, state, theta))
    };
    vec![
        check("lemma1", "dual-identity", 21, opts, 1e-10, |rng| {
            let (problem, scheme, reference, state, theta) = setup(rng)?;
            verify_lemma1_c(&problem, &state, theta, &scheme, &reference)
        }),
        check("lemma1", "primal-bound", 22, opts, 1e-10, |rng| {
            let (problem, scheme, reference, state, theta) = setup(rng)?;
            Ok(-verify_lemma1_b(
                &problem, &state, theta, &scheme, &reference,
            )?)
        }),
    ]
}

fn perturbed_point<R: Rng>(rng: &mut R, center: &[f64]) -> Vec<f64> {
    let scale = [0.1, 1.0, 3.0][rng.random_range(0..3)];
    center
        .iter()
        .map(|c| c + scale * rng.random_range(-1.0..1.0))
        .collect()
}

fn lemma2_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    vec![
        check("lemma2", "convex-bound", 31, opts, 1e-10, |rng| {
            let choice = pick_loss(rng, false);
            let problem = small_problem(rng, choice, 8)?;
            let reference = reference_solution(&problem, None)?;
            let w = perturbed_point(rng, &reference.w);
            Ok(-verify_lemma2(&problem, &w, &reference)?)
        }),
        check("lemma2", "quadratic-equality", 32, opts, 1e-10, |rng| {
            let problem = small_problem(rng, LossChoice::Squared, 8)?;
            let reference = reference_solution(&problem, None)?;
            let w = perturbed_point(rng, &reference.w);
            Ok(verify_lemma2(&problem, &w, &reference)?.abs())
        }),
    ]
}

fn contraction_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let contraction = |rng: &mut ChaCha8Rng, kind: PotentialKind| -> Result<f64> {
        let choice = pick_loss(rng, kind == PotentialKind::D);
        let problem = small_problem(rng, choice, 6)?;
        let scheme = small_scheme(rng, &problem)?;
        let reference = reference_solution(&problem, None)?;
        let state = random_consistent_state(&problem, rng, 2.0)?;
        let s = problem.smoothness();
        let theta = match kind {
            PotentialKind::E => theta_convex(
                scheme.p(),
                scheme.v(),
                &s.loss,
                problem.lambda(),
                problem.n(),
            )?,
            PotentialKind::D => theta_nonconvex(
                scheme.p(),
                scheme.v(),
                &s.composed,
                problem.lambda(),
                problem.n(),
            )?,
        };
        let slack = one_step_contraction(&problem, &state, theta, &scheme, &reference, kind)?;
        Ok(-slack)
    };
    vec![
        check("contraction", "convex-potential", 41, opts, 1e-10, |rng| {
            contraction(rng, PotentialKind::E)
        }),
        check(
            "contraction",
            "nonconvex-potential",
            42,
            opts,
            1e-10,
            |rng| contraction(rng, PotentialKind::D),
        ),
        check(
            "contraction",
            "suboptimality-bridge",
            43,
            opts,
            1e-10,
            |rng| {
                let choice = pick_loss(rng, true);
                let raw = small_problem(rng, choice, 6)?;
                // The bridge constant L + λ bounds the smoothness of P only
                // for rows with ‖A_i‖ ≤ 1.
                let (data, _) = normalize(raw.data(), NormalizeMode::Global)?;
                let problem = Problem::new(data, raw.loss().clone(), raw.lambda())?;
                let reference = reference_solution(&problem, None)?;
                let w = perturbed_point(rng, &reference.w);
                Ok(-suboptimality_bridge(&problem, &w, &reference))
            },
        ),
    ]
}

/// Central-difference derivative with a step scaled to `x`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|fd − exact| / max(1, |exact|)`.
pub fn relative_error(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(1.0)
}

fn gradcheck_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    vec![
        check("gradcheck", "scalar-losses", 51, opts, 1e-5, |rng| {
            let x = rng.random_range(-20.0..20.0);
            let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let losses = [
                ExampleLoss::Logistic { label: y },
                ExampleLoss::Squared {
                    target: rng.random_range(-3.0..3.0),
                },
                ExampleLoss::Quadratic {
                    curvature: rng.random_range(-3.0..3.0),
                    offset: rng.random_range(-3.0..3.0),
                },
            ];
            Ok(losses
                .iter()
                .map(|l| relative_error(central_difference(|t| l.value(t), x), l.gradient(x)))
                .fold(0.0, f64::max))
        }),
        check("gradcheck", "primal-gradient", 52, opts, 1e-5, |rng| {
            let choice = pick_loss(rng, true);
            let problem = small_problem(rng, choice, 8)?;
            let w: Vec<f64> = (0..problem.dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let grad = primal_gradient(&problem, &w);
            let mut worst: f64 = 0.0;
            for j in 0..problem.dim() {
                let along = |t: f64| {
                    let mut x = w.clone();
                    x[j] = t;
                    primal_value(&problem, &x)
                };
                worst = worst.max(relative_error(central_difference(along, w[j]), grad[j]));
            }
            Ok(worst)
        }),
    ]
}

fn fixedpoint_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    vec![
        check(
            "fixedpoint",
            "dual-representation",
            61,
            opts,
            1e-10,
            |rng| {
                let choice = pick_loss(rng, true);
                let problem = small_problem(rng, choice, 8)?;
                let r = reference_solution(&problem, None)?;
                let back = w_from_alpha(&problem, &r.alpha);
                Ok(back
                    .iter()
                    .zip(&r.w)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt())
            },
        ),
        check(
            "fixedpoint",
            "optimum-is-stationary",
            62,
            opts,
            1e-10,
            |rng| {
                let choice = pick_loss(rng, true);
                let problem = small_problem(rng, choice, 6)?;
                let scheme = small_scheme(rng, &problem)?;
                let r = reference_solution(&problem, None)?;
                let start = reference_state(&problem, &r);
                let mut state = start.clone();
                let subset: Vec<usize> =
                    (0..problem.n()).filter(|_| rng.random::<bool>()).collect();
                step(&problem, &mut state, &subset, scheme.p(), scheme.min_p())?;
                let moved = state
                    .w
                    .iter()
                    .zip(&start.w)
                    .chain(state.alpha.iter().zip(&start.alpha))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                Ok(moved)
            },
        ),
    ]
}

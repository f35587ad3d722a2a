//! Reference solutions, Lyapunov potentials and executable checks of the
//! convergence analysis.
//!
//! With `α_i* = -φ_i'(A_i^T w*)`, the potentials are
//!
//! ```text
//! B   = ‖w − w*‖²
//! C_i = (α_i − α_i*)²
//! D   = (λ/2) B + (λ/2n) Σ C_i / L_i²      (non-convex losses)
//! E   = (λ/2) B + (1/2n) Σ C_i / l_i       (convex losses)
//! ```
//!
//! and both contract by a factor `1 − θ` per iteration in expectation when `θ`
//! respects the corresponding bound. The validators below compute the
//! expectations over `S_t` exactly by enumerating every outcome of the sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::losses::{SmoothnessConstants, DENSE_HESSIAN_LIMIT};
use crate::sampling::{SamplingScheme, ENUMERATION_LIMIT};
use crate::solver::{
    init_state, primal_gradient, primal_value, step, w_from_alpha, Problem, SolverState, Trace,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReferenceMethod {
    /// Normal equations for quadratic losses of moderate dimension, otherwise
    /// accelerated gradient descent.
    #[default]
    Auto,
    GradientDescent,
    NormalEquations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub primal: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Gradient-norm target; defaults to `1e-12 (1 + |P(0)|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub method: ReferenceMethod,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200_000,
            method: ReferenceMethod::Auto,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn default_tolerance(problem: &Problem) -> f64 {
    1e-12 * (1.0 + primal_value(problem, &vec![0.0; problem.dim()]).abs())
}

pub fn reference_solution(problem: &Problem, tol: Option<f64>) -> Result<ReferenceSolution> {
    reference_solution_with(
        problem,
        ReferenceOptions {
            tol,
            ..ReferenceOptions::default()
        },
    )
}

/// High-accuracy minimizer of `P`, independent of the stochastic solver.
///
/// Iterates until `‖∇P(w)‖ ≤ tol`, then keeps going for a bounded number of
/// extra iterations towards `0.5e-10 λ`, which makes
/// `‖w* − (1/λn) Σ A_i α_i*‖ = ‖∇P(w*)‖ / λ` smaller than `1e-10` whenever
/// floating point allows it.
pub fn reference_solution_with(
    problem: &Problem,
    opts: ReferenceOptions,
) -> Result<ReferenceSolution> {
    let tol = opts.tol.unwrap_or_else(|| default_tolerance(problem));
    let polish = tol.min(0.5e-10 * problem.lambda());
    let use_normal = match opts.method {
        ReferenceMethod::NormalEquations => {
            if !problem.loss().is_quadratic() {
                return Err(Error::InvalidArgument(
                    "normal equations need a quadratic loss".into(),
                ));
            }
            true
        }
        ReferenceMethod::GradientDescent => false,
        ReferenceMethod::Auto => {
            problem.loss().is_quadratic() && problem.dim() <= DENSE_HESSIAN_LIMIT
        }
    };

    let start = if use_normal {
        solve_normal_equations(problem)?
    } else {
        vec![0.0; problem.dim()]
    };
    let w = accelerated_descent(problem, start, tol, polish, opts.max_iter)?;

    let alpha: Vec<f64> = problem.loss_gradients(&w).into_iter().map(|g| -g).collect();
    let grad_norm = norm(&primal_gradient(problem, &w));
    Ok(ReferenceSolution {
        primal: primal_value(problem, &w),
        grad_norm,
        alpha,
        w,
    })
}

/// Solves `((1/n) Σ c_i A_i A_i^T + λ I) w = -(1/n) Σ b_i A_i` by Cholesky with
/// two rounds of iterative refinement.
fn solve_normal_equations(problem: &Problem) -> Result<Vec<f64>> {
    let d = problem.dim();
    if d > DENSE_HESSIAN_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} too large for the dense normal equations"
        )));
    }
    let n = problem.n() as f64;
    let mut h = DMatrix::<f64>::identity(d, d) * problem.lambda();
    let mut rhs = DVector::<f64>::zeros(d);
    for (i, example) in problem.data().examples().iter().enumerate() {
        let (c, b) = problem
            .loss()
            .get(i)
            .quadratic_coefficients()
            .ok_or_else(|| {
                Error::InvalidArgument("normal equations need a quadratic loss".into())
            })?;
        let idx = example.indices();
        let val = example.values();
        for (a, &ja) in idx.iter().enumerate() {
            rhs[ja] -= b * val[a] / n;
            for (bb, &jb) in idx.iter().enumerate() {
                h[(ja, jb)] += c * val[a] * val[bb] / n;
            }
        }
    }
    let chol = h.cholesky().ok_or(Error::NotConvex {
        min_eigenvalue: f64::NAN,
    })?;
    let mut w = chol.solve(&rhs);
    for _ in 0..2 {
        let grad = DVector::from_vec(primal_gradient(problem, w.as_slice()));
        w -= chol.solve(&grad);
    }
    Ok(w.as_slice().to_vec())
}

/// Nesterov's method for `λ`-strongly convex `P` with step `1/L̄`, where
/// `L̄ = (1/n) Σ l_i ‖A_i‖² + λ` bounds the smoothness of `P`. Only gradients
/// are used, so progress is not limited by the resolution of `P` itself.
fn accelerated_descent(
    problem: &Problem,
    start: Vec<f64>,
    tol: f64,
    polish: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = problem.n() as f64;
    let lambda = problem.lambda();
    let smooth = problem
        .smoothness()
        .loss
        .iter()
        .zip(problem.data().norms_sq())
        .map(|(l, s)| l * s)
        .sum::<f64>()
        / n
        + lambda;
    let q = (lambda / smooth).sqrt();
    let momentum = (1.0 - q) / (1.0 + q);
    let extra = (20.0 / q).ceil() as usize + 100;

    let mut x = start.clone();
    let mut y = start;
    let mut best = (f64::INFINITY, y.clone());
    let mut reached_at: Option<usize> = None;
    for k in 0..=max_iter {
        let grad = primal_gradient(problem, &y);
        let gn = norm(&grad);
        if !gn.is_finite() {
            break;
        }
        if gn < best.0 {
            best = (gn, y.clone());
        }
        if gn <= polish {
            return Ok(y);
        }
        if gn <= tol && reached_at.is_none() {
            reached_at = Some(k);
        }
        if let Some(at) = reached_at {
            if k >= at + extra {
                break;
            }
        }
        if k == max_iter {
            break;
        }
        let x_next: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(yj, gj)| yj - gj / smooth)
            .collect();
        for j in 0..y.len() {
            y[j] = x_next[j] + momentum * (x_next[j] - x[j]);
        }
        x = x_next;
    }
    if best.0 <= tol {
        Ok(best.1)
    } else {
        Err(Error::OracleNotConverged {
            iterations: max_iter,
            grad_norm: best.0,
            target: tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub b: f64,
    pub c: Vec<f64>,
    /// `None` when some `L_i = 0`, which leaves `D` undefined.
    pub d: Option<f64>,
    pub e: f64,
}

pub fn potentials(
    w: &[f64],
    alpha: &[f64],
    reference: &ReferenceSolution,
    smoothness: &SmoothnessConstants,
    lambda: f64,
) -> Potentials {
    let n = alpha.len() as f64;
    let b: f64 = w
        .iter()
        .zip(&reference.w)
        .map(|(a, s)| (a - s) * (a - s))
        .sum();
    let c: Vec<f64> = alpha
        .iter()
        .zip(&reference.alpha)
        .map(|(a, s)| (a - s) * (a - s))
        .collect();
    let d = if smoothness.composed.iter().all(|&l| l > 0.0) {
        let sum: f64 = c
            .iter()
            .zip(&smoothness.composed)
            .map(|(ci, l)| ci / (l * l))
            .sum();
        Some(0.5 * lambda * b + 0.5 * lambda / n * sum)
    } else {
        None
    };
    let sum_e: f64 = c.iter().zip(&smoothness.loss).map(|(ci, l)| ci / l).sum();
    let e = 0.5 * lambda * b + 0.5 / n * sum_e;
    Potentials { b, c, d, e }
}

/// `x0 · exp(−θ t)`.
pub fn decay_envelope(x0: f64, theta: f64, t: f64) -> f64 {
    x0 * (-theta * t).exp()
}

/// Which Lyapunov potential a check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    /// Non-convex potential, weights `λ / L_i²`.
    D,
    /// Convex potential, weights `1 / l_i`.
    E,
}

impl PotentialKind {
    fn of(self, p: &Potentials) -> Result<f64> {
        match self {
            PotentialKind::E => Ok(p.e),
            PotentialKind::D => {
                p.d.ok_or_else(|| Error::InvalidArgument("potential D needs every L_i > 0".into()))
            }
        }
    }
}

fn enumerate(scheme: &SamplingScheme) -> Result<Vec<(Vec<usize>, f64)>> {
    scheme.atoms(ENUMERATION_LIMIT)
}

/// States after one step for every outcome of the sampling.
fn successors(
    problem: &Problem,
    state: &SolverState,
    theta: f64,
    scheme: &SamplingScheme,
) -> Result<Vec<(SolverState, f64)>> {
    enumerate(scheme)?
        .into_iter()
        .map(|(subset, prob)| {
            let mut next = state.clone();
            step(problem, &mut next, &subset, scheme.p(), theta)?;
            Ok((next, prob))
        })
        .collect()
}

/// Per-coordinate `u_i = -φ_i'(A_i^T w)` and `z_i = α_i − u_i`.
fn u_and_z(problem: &Problem, state: &SolverState) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = problem
        .loss_gradients(&state.w)
        .into_iter()
        .map(|g| -g)
        .collect();
    let z = state.alpha.iter().zip(&u).map(|(a, ui)| a - ui).collect();
    (u, z)
}

/// Exact check of the expected dual-distance decrease:
///
/// `E[C_i − C_i⁺] = θ [ (α_i − α_i*)² − (u_i − α_i*)² + (1 − θ/p_i) z_i² ]`.
///
/// Returns `max_i |LHS_i − RHS_i|`.
pub fn verify_lemma1_c(
    problem: &Problem,
    state: &SolverState,
    theta: f64,
    scheme: &SamplingScheme,
    reference: &ReferenceSolution,
) -> Result<f64> {
    let star = &reference.alpha;
    let c_before: Vec<f64> = state
        .alpha
        .iter()
        .zip(star)
        .map(|(a, s)| (a - s) * (a - s))
        .collect();
    let mut lhs = vec![0.0; problem.n()];
    for (next, prob) in successors(problem, state, theta, scheme)? {
        for i in 0..problem.n() {
            let c_after = (next.alpha[i] - star[i]) * (next.alpha[i] - star[i]);
            lhs[i] += prob * (c_before[i] - c_after);
        }
    }
    let (u, z) = u_and_z(problem, state);
    let p = scheme.p();
    Ok((0..problem.n())
        .map(|i| {
            let rhs = theta
                * (c_before[i] - (u[i] - star[i]) * (u[i] - star[i])
                    + (1.0 - theta / p[i]) * z[i] * z[i]);
            (lhs[i] - rhs).abs()
        })
        .fold(0.0, f64::max))
}

/// Exact check of the expected primal-distance decrease bound:
///
/// `E[B − B⁺] ≥ (2θ/λ)(w − w*)^T ∇P(w) − (θ²/n²λ²) Σ (v_i/p_i) z_i²`.
///
/// `state` must satisfy `w = (1/λn) Σ A_i α_i`. Returns `LHS − RHS`.
pub fn verify_lemma1_b(
    problem: &Problem,
    state: &SolverState,
    theta: f64,
    scheme: &SamplingScheme,
    reference: &ReferenceSolution,
) -> Result<f64> {
    let dist = |w: &[f64]| -> f64 {
        w.iter()
            .zip(&reference.w)
            .map(|(a, s)| (a - s) * (a - s))
            .sum()
    };
    let b_before = dist(&state.w);
    let lhs: f64 = successors(problem, state, theta, scheme)?
        .iter()
        .map(|(next, prob)| prob * (b_before - dist(&next.w)))
        .sum();

    let lambda = problem.lambda();
    let n = problem.n() as f64;
    let grad = primal_gradient(problem, &state.w);
    let inner: f64 = state
        .w
        .iter()
        .zip(&reference.w)
        .zip(&grad)
        .map(|((w, s), g)| (w - s) * g)
        .sum();
    let (_, z) = u_and_z(problem, state);
    let penalty: f64 = (0..problem.n())
        .map(|i| scheme.v()[i] / scheme.p()[i] * z[i] * z[i])
        .sum();
    let rhs = 2.0 * theta / lambda * inner - theta * theta / (n * n * lambda * lambda) * penalty;
    Ok(lhs - rhs)
}

/// Checks, for convex losses,
///
/// `(1/n) Σ (1/l_i)(φ_i'(A_i^T w) − φ_i'(A_i^T w*))² ≤ 2 (P(w) − P(w*) − (λ/2)‖w − w*‖²)`
///
/// and returns `RHS − LHS`.
pub fn verify_lemma2(problem: &Problem, w: &[f64], reference: &ReferenceSolution) -> Result<f64> {
    if !problem.loss().all_convex() {
        return Err(Error::InvalidArgument(
            "this bound assumes every loss is convex".into(),
        ));
    }
    let n = problem.n() as f64;
    let g = problem.loss_gradients(w);
    let g_star = problem.loss_gradients(&reference.w);
    let l = &problem.smoothness().loss;
    let lhs: f64 = (0..problem.n())
        .map(|i| (g[i] - g_star[i]) * (g[i] - g_star[i]) / l[i])
        .sum::<f64>()
        / n;
    let dist: f64 = w
        .iter()
        .zip(&reference.w)
        .map(|(a, s)| (a - s) * (a - s))
        .sum();
    let rhs = 2.0 * (primal_value(problem, w) - reference.primal - 0.5 * problem.lambda() * dist);
    Ok(rhs - lhs)
}

/// Exact one-step contraction check: returns `(1 − θ) X − E[X⁺]` for the
/// chosen potential (nonnegative when the analysis applies).
pub fn one_step_contraction(
    problem: &Problem,
    state: &SolverState,
    theta: f64,
    scheme: &SamplingScheme,
    reference: &ReferenceSolution,
    kind: PotentialKind,
) -> Result<f64> {
    let s = problem.smoothness();
    let lambda = problem.lambda();
    let before = kind.of(&potentials(&state.w, &state.alpha, reference, s, lambda))?;
    let mut after = 0.0;
    for (next, prob) in successors(problem, state, theta, scheme)? {
        after += prob * kind.of(&potentials(&next.w, &next.alpha, reference, s, lambda))?;
    }
    Ok((1.0 - theta) * before - after)
}

/// `P(w) − P(w*) ≤ ((L + λ)/2) ‖w − w*‖²`; returns the slack `RHS − LHS`.
///
/// `L + λ` bounds the smoothness of `P` when every `‖A_i‖ ≤ 1`; on
/// unnormalized data the slack can be negative.
pub fn suboptimality_bridge(problem: &Problem, w: &[f64], reference: &ReferenceSolution) -> f64 {
    let dist: f64 = w
        .iter()
        .zip(&reference.w)
        .map(|(a, s)| (a - s) * (a - s))
        .sum();
    let bound = 0.5 * (problem.smoothness().max_composed + problem.lambda()) * dist;
    bound - (primal_value(problem, w) - reference.primal)
}

/// `α_i ~ N(0, scale²)` with `w` recomputed from `α`.
pub fn random_consistent_state<R: Rng>(
    problem: &Problem,
    rng: &mut R,
    scale: f64,
) -> Result<SolverState> {
    let alpha: Vec<f64> = (0..problem.n())
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            scale * x
        })
        .collect();
    init_state(problem, Some(&alpha))
}

/// The state with `α = α*` and `w = (1/λn) Σ A_i α_i*`.
pub fn reference_state(problem: &Problem, reference: &ReferenceSolution) -> SolverState {
    SolverState {
        w: w_from_alpha(problem, &reference.alpha),
        alpha: reference.alpha.clone(),
        t: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub kind: PotentialKind,
    pub theta: f64,
    pub rows: Vec<CheckpointRow>,
    pub all_pass: bool,
    /// Iterations after which theory guarantees `E[P − P*] ≤ ε`.
    pub theoretical_iterations: Option<f64>,
    /// First checkpoint where the mean suboptimality is at most `ε`.
    pub first_passage: Option<u64>,
}

/// Target for the suboptimality part of a [`ConvergenceReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuboptimalityTarget {
    pub big_l: f64,
    pub lambda: f64,
    pub eps: f64,
}

/// Aggregates traces from independent seeds (recorded at the same
/// checkpoints) and compares the mean potential with `X⁰ e^{−θt}`.
///
/// A checkpoint passes when `mean ≤ envelope · (1 + 2·stderr/mean)`.
pub fn convergence_report(
    traces: &[Trace],
    theta: f64,
    kind: PotentialKind,
    target: Option<SuboptimalityTarget>,
) -> Result<ConvergenceReport> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument(
            "a convergence report needs at least two traces".into(),
        ));
    }
    let len = traces[0].records.len();
    if traces.iter().any(|t| t.records.len() != len) || len == 0 {
        return Err(Error::InvalidArgument(
            "traces must be nonempty and share their checkpoints".into(),
        ));
    }
    let pick = |rec: &crate::solver::TraceRecord| -> Result<f64> {
        match kind {
            PotentialKind::D => rec.d,
            PotentialKind::E => rec.e,
        }
        .ok_or_else(|| Error::InvalidArgument("trace carries no potentials".into()))
    };
    let count = traces.len() as f64;
    let mean_std = |values: &[f64]| -> (f64, f64) {
        let mean = values.iter().sum::<f64>() / count;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
        (mean, (var / count).sqrt())
    };

    let mut rows = Vec::with_capacity(len);
    let mut x0 = 0.0;
    for k in 0..len {
        let t = traces[0].records[k].t;
        if traces.iter().any(|tr| tr.records[k].t != t) {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {k} differs across traces"
            )));
        }
        let values = traces
            .iter()
            .map(|tr| pick(&tr.records[k]))
            .collect::<Result<Vec<_>>>()?;
        let (mean, stderr) = mean_std(&values);
        if k == 0 {
            x0 = mean;
        }
        let envelope = decay_envelope(x0, theta, t as f64);
        let pass = mean == 0.0 || mean <= envelope * (1.0 + 2.0 * stderr / mean);
        rows.push(CheckpointRow {
            t,
            mean,
            stderr,
            envelope,
            pass,
        });
    }

    let (theoretical_iterations, first_passage) = match target {
        Some(SuboptimalityTarget { big_l, lambda, eps }) => {
            let theory = crate::solver::iteration_bound(theta, big_l, lambda, x0, eps);
            let mut first = None;
            for k in 0..len {
                let subs = traces
                    .iter()
                    .map(|tr| {
                        tr.records[k].subopt.ok_or_else(|| {
                            Error::InvalidArgument("trace carries no suboptimality".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if subs.iter().sum::<f64>() / count <= eps {
                    first = Some(traces[0].records[k].t);
                    break;
                }
            }
            (Some(theory), first)
        }
        None => (None, None),
    };

    Ok(ConvergenceReport {
        kind,
        theta,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        theoretical_iterations,
        first_passage,
    })
}

//! Dual-free SDCA with arbitrary sampling.
//!
//! The solver keeps one scalar dual variable `α_i` per example and a dense
//! primal vector `w` tied to them by `w = (1/λn) Σ_i A_i α_i`. Each iteration
//! samples `S_t`, evaluates `φ_i'(A_i^T w)` for `i ∈ S_t` at the current `w`,
//! moves `α_i` a fraction `θ/p_i` of the way towards `-φ_i'(A_i^T w)`, and
//! applies the matching sparse correction to `w`.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diagnostics::{potentials, ReferenceSolution};
use crate::exec::{Execution, BLOCK};
use crate::losses::{smoothness_constants, LossSpec, SmoothnessConstants};
use crate::sampling::SamplingScheme;
use crate::{Error, Result};

/// `min_w P(w) = (1/n) Σ φ_i(A_i^T w) + (λ/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct Problem {
    data: Dataset,
    loss: LossSpec,
    lambda: f64,
    smoothness: SmoothnessConstants,
    exec: Execution,
}

impl Problem {
    pub fn new(data: Dataset, loss: LossSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let smoothness = smoothness_constants(&loss, &data)?;
        Ok(Self {
            data,
            loss,
            lambda,
            smoothness,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn smoothness(&self) -> &SmoothnessConstants {
        &self.smoothness
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// `φ_i'(A_i^T w)` for every example.
    pub fn loss_gradients(&self, w: &[f64]) -> Vec<f64> {
        let blocks = self.exec.map_blocks(self.n(), BLOCK, |range| {
            range
                .map(|i| self.loss.gradient(i, self.data.example(i).dot(w)))
                .collect::<Vec<_>>()
        });
        blocks.concat()
    }

    /// `Σ_i coeff_i A_i`, reduced block by block in a fixed order.
    pub fn combine(&self, coeff: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let partials = self.exec.map_blocks(self.n(), BLOCK, |range| {
            let mut acc = vec![0.0; d];
            for i in range {
                self.data.example(i).add_scaled_to(coeff[i], &mut acc);
            }
            acc
        });
        let mut out = vec![0.0; d];
        for partial in partials {
            out.iter_mut().zip(partial).for_each(|(o, p)| *o += p);
        }
        out
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn primal_value(problem: &Problem, w: &[f64]) -> f64 {
    let partials = problem.exec.map_blocks(problem.n(), BLOCK, |range| {
        range
            .map(|i| problem.loss.value(i, problem.data.example(i).dot(w)))
            .sum::<f64>()
    });
    partials.into_iter().sum::<f64>() / problem.n() as f64 + 0.5 * problem.lambda * norm_sq(w)
}

/// `∇P(w) = (1/n) Σ A_i φ_i'(A_i^T w) + λ w`.
pub fn primal_gradient(problem: &Problem, w: &[f64]) -> Vec<f64> {
    let n = problem.n() as f64;
    let coeff: Vec<f64> = problem
        .loss_gradients(w)
        .into_iter()
        .map(|g| g / n)
        .collect();
    let mut grad = problem.combine(&coeff);
    grad.iter_mut()
        .zip(w)
        .for_each(|(g, wj)| *g += problem.lambda * wj);
    grad
}

/// `(1/λn) Σ A_i α_i`.
pub fn w_from_alpha(problem: &Problem, alpha: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (problem.lambda * problem.n() as f64);
    let coeff: Vec<f64> = alpha.iter().map(|a| a * scale).collect();
    problem.combine(&coeff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub t: u64,
}

/// `α = α0` (zero by default) and `w = (1/λn) Σ A_i α_i`.
pub fn init_state(problem: &Problem, alpha0: Option<&[f64]>) -> Result<SolverState> {
    let alpha = match alpha0 {
        Some(a) if a.len() != problem.n() => {
            return Err(Error::InvalidArgument(format!(
                "initial dual vector has length {}, expected {}",
                a.len(),
                problem.n()
            )))
        }
        Some(a) => a.to_vec(),
        None => vec![0.0; problem.n()],
    };
    let w = w_from_alpha(problem, &alpha);
    Ok(SolverState { w, alpha, t: 0 })
}

/// `‖w − (1/λn) Σ A_i α_i‖`.
pub fn relation_residual(problem: &Problem, state: &SolverState) -> f64 {
    let exact = w_from_alpha(problem, &state.alpha);
    state
        .w
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_rate_inputs(p: &[f64], v: &[f64], c: &[f64], lambda: f64, n: usize) -> Result<()> {
    if p.len() != n || v.len() != n || c.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "rate inputs must all have length n = {n}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if p.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::InvalidArgument(
            "probabilities must lie in (0, 1]".into(),
        ));
    }
    if v.iter().chain(c).any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(
            "ESO and smoothness parameters must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Largest stepsize covered by the convex-loss rate: `min_i p_i nλ / (l_i v_i + nλ)`.
pub fn theta_convex(p: &[f64], v: &[f64], l: &[f64], lambda: f64, n: usize) -> Result<f64> {
    check_rate_inputs(p, v, l, lambda, n)?;
    let nl = n as f64 * lambda;
    Ok((0..n)
        .map(|i| p[i] * nl / (l[i] * v[i] + nl))
        .fold(f64::INFINITY, f64::min))
}

/// Largest stepsize covered by the non-convex rate: `min_i p_i nλ² / (L_i² v_i + nλ²)`.
pub fn theta_nonconvex(p: &[f64], v: &[f64], big_l: &[f64], lambda: f64, n: usize) -> Result<f64> {
    check_rate_inputs(p, v, big_l, lambda, n)?;
    let nl2 = n as f64 * lambda * lambda;
    Ok((0..n)
        .map(|i| p[i] * nl2 / (big_l[i] * big_l[i] * v[i] + nl2))
        .fold(f64::INFINITY, f64::min))
}

/// Iterations needed for `E[P(w_T) − P*] ≤ ε` given a potential `x0`:
/// `(1/θ) log((L + λ) x0 / (λ ε))`.
pub fn iteration_bound(theta: f64, big_l: f64, lambda: f64, x0: f64, eps: f64) -> f64 {
    ((big_l + lambda) * x0 / (lambda * eps)).ln() / theta
}

/// `κ = max_i l_i ‖A_i‖² / λ`, the uniform-sampling condition number.
pub fn condition_number_uniform(l: &[f64], norms_sq: &[f64], lambda: f64) -> f64 {
    l.iter()
        .zip(norms_sq)
        .map(|(a, b)| a * b)
        .fold(0.0, f64::max)
        / lambda
}

/// `κ = Σ_i l_i ‖A_i‖² / (nλ)`, the importance-sampling condition number.
pub fn condition_number_importance(l: &[f64], norms_sq: &[f64], lambda: f64) -> f64 {
    let n = l.len() as f64;
    l.iter().zip(norms_sq).map(|(a, b)| a * b).sum::<f64>() / (n * lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaMode {
    AutoConvex,
    AutoNonconvex,
    Explicit(f64),
}

impl FromStr for ThetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto-convex" => Ok(ThetaMode::AutoConvex),
            "auto-nonconvex" => Ok(ThetaMode::AutoNonconvex),
            other => other.parse::<f64>().map(ThetaMode::Explicit).map_err(|_| {
                Error::InvalidArgument(format!(
                    "invalid theta '{other}' (expected auto-convex, auto-nonconvex or a number)"
                ))
            }),
        }
    }
}

/// Turns a [`ThetaMode`] into a stepsize valid for `scheme`.
pub fn resolve_theta(problem: &Problem, scheme: &SamplingScheme, mode: ThetaMode) -> Result<f64> {
    let n = problem.n();
    let s = &problem.smoothness;
    match mode {
        ThetaMode::AutoConvex => theta_convex(scheme.p(), scheme.v(), &s.loss, problem.lambda, n),
        ThetaMode::AutoNonconvex => {
            theta_nonconvex(scheme.p(), scheme.v(), &s.composed, problem.lambda, n)
        }
        ThetaMode::Explicit(theta) => {
            let min_p = scheme.min_p();
            if theta > 0.0 && theta <= min_p {
                Ok(theta)
            } else {
                Err(Error::InvalidArgument(format!(
                    "theta = {theta} must lie in (0, min_i p_i = {min_p}]"
                )))
            }
        }
    }
}

/// One iteration on the subset `subset` with marginals `p`.
///
/// All gradients are taken at the incoming `w` before anything is updated.
/// Fails without touching `state` if `θ > p_i` for some sampled `i`.
pub fn step(
    problem: &Problem,
    state: &mut SolverState,
    subset: &[usize],
    p: &[f64],
    theta: f64,
) -> Result<()> {
    let mut z = Vec::with_capacity(subset.len());
    step_with_buffer(problem, state, subset, p, theta, &mut z)
}

fn step_with_buffer(
    problem: &Problem,
    state: &mut SolverState,
    subset: &[usize],
    p: &[f64],
    theta: f64,
    z: &mut Vec<f64>,
) -> Result<()> {
    if let Some(&i) = subset.iter().find(|&&i| theta > p[i]) {
        return Err(Error::ThetaExceedsProbability {
            theta,
            index: i,
            probability: p[i],
        });
    }
    z.clear();
    z.extend(subset.iter().map(|&i| {
        let x = problem.data.example(i).dot(&state.w);
        problem.loss.gradient(i, x) + state.alpha[i]
    }));
    let nl = problem.n() as f64 * problem.lambda;
    for (&i, &zi) in subset.iter().zip(z.iter()) {
        let ratio = theta / p[i];
        state.alpha[i] -= ratio * zi;
        problem
            .data
            .example(i)
            .add_scaled_to(-ratio * zi / nl, &mut state.w);
    }
    state.t += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub theta: ThetaMode,
    /// Passes over the data, counted as `t · E|Ŝ| / n`.
    pub epochs: f64,
    pub seed: u64,
    /// Iterations between exact recomputations of `w` from `α` (default `n`).
    pub resync_period: Option<usize>,
    /// Iterations between trace records (default `n`).
    pub trace_period: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: ThetaMode::AutoConvex,
            epochs: 10.0,
            seed: 0,
            resync_period: None,
            trace_period: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub epoch: f64,
    pub primal: f64,
    /// `‖w − (1/λn) Σ A_i α_i‖` measured before any resynchronisation at `t`.
    pub residual: f64,
    pub subopt: Option<f64>,
    pub b: Option<f64>,
    pub d: Option<f64>,
    pub e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SolverState,
    pub trace: Trace,
    pub theta: f64,
    pub iterations: u64,
    /// Number of `φ_i'` evaluations performed by the iterations.
    pub grad_evals: u64,
}

/// Number of iterations that make up `epochs` passes for `scheme`.
pub fn iterations_for(epochs: f64, n: usize, scheme: &SamplingScheme) -> u64 {
    (epochs * n as f64 / scheme.expected_size() - 1e-9)
        .ceil()
        .max(0.0) as u64
}

fn record(
    problem: &Problem,
    state: &SolverState,
    scheme: &SamplingScheme,
    reference: Option<&ReferenceSolution>,
) -> TraceRecord {
    let primal = primal_value(problem, &state.w);
    let epoch = state.t as f64 * scheme.expected_size() / problem.n() as f64;
    let residual = relation_residual(problem, state);
    let mut rec = TraceRecord {
        t: state.t,
        epoch,
        primal,
        residual,
        subopt: None,
        b: None,
        d: None,
        e: None,
    };
    if let Some(r) = reference {
        let pot = potentials(
            &state.w,
            &state.alpha,
            r,
            &problem.smoothness,
            problem.lambda,
        );
        rec.subopt = Some(primal - r.primal);
        rec.b = Some(pot.b);
        rec.d = pot.d;
        rec.e = Some(pot.e);
    }
    rec
}

/// Runs the solver from `α = 0`.
///
/// Aborts with [`Error::Diverged`] when a checkpoint objective exceeds
/// `10⁶ |P(w⁰)| + 10⁶` or is not finite.
pub fn run(
    problem: &Problem,
    scheme: &SamplingScheme,
    config: &SolverConfig,
    reference: Option<&ReferenceSolution>,
) -> Result<RunOutput> {
    let state = init_state(problem, None)?;
    run_from(problem, scheme, config, reference, state)
}

pub fn run_from(
    problem: &Problem,
    scheme: &SamplingScheme,
    config: &SolverConfig,
    reference: Option<&ReferenceSolution>,
    mut state: SolverState,
) -> Result<RunOutput> {
    if scheme.n() != problem.n() {
        return Err(Error::InvalidArgument(format!(
            "sampling over {} examples for a problem with {}",
            scheme.n(),
            problem.n()
        )));
    }
    if !(config.epochs >= 0.0 && config.epochs.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epochs must be finite and nonnegative, got {}",
            config.epochs
        )));
    }
    let theta = resolve_theta(problem, scheme, config.theta)?;
    let n = problem.n();
    let resync = config.resync_period.unwrap_or(n).max(1) as u64;
    let trace_every = config.trace_period.unwrap_or(n).max(1) as u64;
    let iterations = iterations_for(config.epochs, n, scheme);

    let mut trace = Trace::default();
    let first = record(problem, &state, scheme, reference);
    let guard = 1e6 * first.primal.abs() + 1e6;
    trace.records.push(first);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampler = scheme.sampler();
    let mut z = Vec::with_capacity(scheme.max_card());
    let mut grad_evals = 0u64;
    let start = state.t;

    for k in 1..=iterations {
        let draw = sampler.draw(&mut rng);
        grad_evals += draw.len() as u64;
        step_with_buffer(
            problem,
            &mut state,
            draw.coords(),
            scheme.p(),
            theta,
            &mut z,
        )?;

        if k % trace_every == 0 || k == iterations {
            let rec = record(problem, &state, scheme, reference);
            if !(rec.primal <= guard) {
                return Err(Error::Diverged {
                    iteration: state.t,
                    primal: rec.primal,
                    guard,
                });
            }
            trace.records.push(rec);
        }
        if k % resync == 0 {
            state.w = w_from_alpha(problem, &state.alpha);
        }
    }

    Ok(RunOutput {
        theta,
        iterations: state.t - start,
        grad_evals,
        state,
        trace,
    })
}

/// Independent runs for each seed, fanned out according to `exec`.
pub fn run_seeds(
    problem: &Problem,
    scheme: &SamplingScheme,
    config: &SolverConfig,
    seeds: &[u64],
    reference: Option<&ReferenceSolution>,
    exec: Execution,
) -> Result<Vec<RunOutput>> {
    exec.map(seeds.len(), |k| {
        let cfg = SolverConfig {
            seed: seeds[k],
            ..config.clone()
        };
        run(problem, scheme, &cfg, reference)
    })
    .into_iter()
    .collect()
}

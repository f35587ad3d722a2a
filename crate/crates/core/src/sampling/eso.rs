//! Empirical check of the ESO inequality
//! `E‖Σ_{i∈Ŝ} A_i h_i‖² ≤ Σ_i p_i v_i h_i²` for random `h`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SamplingScheme;
use crate::dataset::Dataset;
use crate::exec::Execution;

/// Schemes with at most this many outcomes are enumerated exactly.
pub const ENUMERATION_LIMIT: u128 = 10_000;
/// Monte Carlo draws per `h` when the scheme is not enumerable.
pub const MONTE_CARLO_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsoReport {
    /// Largest observed `LHS / RHS` over the trial vectors.
    pub ratio: f64,
    /// Standard error of that ratio (zero for exact enumeration).
    pub stderr: f64,
    /// Whether the left side was computed by exact enumeration.
    pub exact: bool,
    pub trials: usize,
}

impl EsoReport {
    /// `ratio ≤ 1 + 3·stderr`, with a rounding allowance for exact results.
    pub fn holds(&self) -> bool {
        self.ratio <= 1.0 + 3.0 * self.stderr + 1e-12
    }
}

pub fn validate_eso(
    scheme: &SamplingScheme,
    data: &Dataset,
    trials: usize,
    seed: u64,
) -> EsoReport {
    validate_eso_with(scheme, data, trials, seed, Execution::default())
}

pub fn validate_eso_with(
    scheme: &SamplingScheme,
    data: &Dataset,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> EsoReport {
    let atoms = scheme.atoms(ENUMERATION_LIMIT).ok();
    let exact = atoms.is_some();
    let trials = trials.max(1);

    let results = exec.map(trials, |trial| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let h: Vec<f64> = (0..scheme.n())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let rhs: f64 = (0..scheme.n())
            .map(|i| scheme.p()[i] * scheme.v()[i] * h[i] * h[i])
            .sum();
        let mut acc = vec![0.0; data.dim()];
        let (mean, stderr) = match &atoms {
            Some(atoms) => {
                let lhs: f64 = atoms
                    .iter()
                    .map(|(subset, prob)| prob * aggregate_norm_sq(data, subset, &h, &mut acc))
                    .sum();
                (lhs, 0.0)
            }
            None => {
                let mut sampler = scheme.sampler();
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for _ in 0..MONTE_CARLO_DRAWS {
                    let value =
                        aggregate_norm_sq(data, sampler.draw(&mut rng).coords(), &h, &mut acc);
                    sum += value;
                    sum_sq += value * value;
                }
                let count = MONTE_CARLO_DRAWS as f64;
                let mean = sum / count;
                let var = ((sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0);
                (mean, (var / count).sqrt())
            }
        };
        if rhs > 0.0 {
            (mean / rhs, stderr / rhs)
        } else {
            (0.0, 0.0)
        }
    });

    let (ratio, stderr) = results
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0), |best, r| {
            if r.0 > best.0 {
                r
            } else {
                best
            }
        });
    EsoReport {
        ratio,
        stderr,
        exact,
        trials,
    }
}

/// `‖Σ_{i∈S} A_i h_i‖²`, using `acc` (all zeros on entry and exit) as scratch.
fn aggregate_norm_sq(data: &Dataset, subset: &[usize], h: &[f64], acc: &mut [f64]) -> f64 {
    for &i in subset {
        data.example(i).add_scaled_to(h[i], acc);
    }
    let mut total = 0.0;
    for &i in subset {
        for &j in data.example(i).indices() {
            total += acc[j] * acc[j];
            acc[j] = 0.0;
        }
    }
    total
}

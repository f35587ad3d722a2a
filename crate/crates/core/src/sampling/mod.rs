//! Arbitrary samplings `Ŝ` over `[n]`.
//!
//! A [`SamplingScheme`] is an immutable descriptor carrying the marginals
//! `p_i = Prob(i ∈ Ŝ)`, ESO parameters `v_i` satisfying
//! `E‖Σ_{i∈Ŝ} A_i h_i‖² ≤ Σ_i p_i v_i h_i²`, and an upper bound on `|Ŝ|`.
//! Draws go through a [`Sampler`], which owns the scratch state and borrows a
//! caller-provided random generator.

mod chunks;
mod eso;

use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::{Error, Result};

pub use chunks::{naive_chunks, naive_chunks_with, ChunkGuard, ChunkPartition};
pub use eso::{validate_eso, validate_eso_with, EsoReport, ENUMERATION_LIMIT, MONTE_CARLO_DRAWS};

#[derive(Debug, Clone)]
enum Kind {
    SerialUniform,
    SerialWeighted(WeightedIndex<f64>),
    TauNice(usize),
    Chunked {
        partition: ChunkPartition,
        tau: usize,
    },
}

#[derive(Debug, Clone)]
pub struct SamplingScheme {
    p: Vec<f64>,
    v: Vec<f64>,
    max_card: usize,
    kind: Kind,
    label: String,
}

impl SamplingScheme {
    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// Marginals `p_i`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// ESO parameters `v_i`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `c` with `Prob(|Ŝ| <= c) = 1`.
    pub fn max_card(&self) -> usize {
        self.max_card
    }

    /// `E|Ŝ| = Σ_i p_i`.
    pub fn expected_size(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn min_p(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_serial(&self) -> bool {
        matches!(self.kind, Kind::SerialUniform | Kind::SerialWeighted(_))
    }

    pub fn partition(&self) -> Option<&ChunkPartition> {
        match &self.kind {
            Kind::Chunked { partition, .. } => Some(partition),
            _ => None,
        }
    }

    /// Replaces the ESO parameters. Used to probe the validator with
    /// deliberately wrong values.
    pub fn with_eso(mut self, v: Vec<f64>) -> Result<Self> {
        if v.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "{} ESO parameters for n = {}",
                v.len(),
                self.n()
            )));
        }
        self.v = v;
        Ok(self)
    }

    pub fn sampler(&self) -> Sampler<'_> {
        let units = match &self.kind {
            Kind::Chunked { partition, .. } => partition.k(),
            _ => self.n(),
        };
        Sampler {
            scheme: self,
            perm: (0..units).collect(),
            draw: Draw::default(),
        }
    }

    /// Number of distinct outcomes of `Ŝ`.
    pub fn atom_count(&self) -> u128 {
        match &self.kind {
            Kind::SerialUniform | Kind::SerialWeighted(_) => self.n() as u128,
            Kind::TauNice(tau) => binomial(self.n(), *tau),
            Kind::Chunked { partition, tau } => binomial(partition.k(), *tau),
        }
    }

    /// Every outcome of `Ŝ` with its probability, if there are at most `limit`.
    pub fn atoms(&self, limit: u128) -> Result<Vec<(Vec<usize>, f64)>> {
        let atoms = self.atom_count();
        if atoms > limit {
            return Err(Error::NotEnumerable { atoms, limit });
        }
        Ok(match &self.kind {
            Kind::SerialUniform | Kind::SerialWeighted(_) => {
                (0..self.n()).map(|i| (vec![i], self.p[i])).collect()
            }
            Kind::TauNice(tau) => {
                let prob = 1.0 / atoms as f64;
                combinations(self.n(), *tau)
                    .into_iter()
                    .map(|c| (c, prob))
                    .collect()
            }
            Kind::Chunked { partition, tau } => {
                let prob = 1.0 / atoms as f64;
                combinations(partition.k(), *tau)
                    .into_iter()
                    .map(|chosen| {
                        let coords = chosen.iter().flat_map(|&j| partition.chunk(j)).collect();
                        (coords, prob)
                    })
                    .collect()
            }
        })
    }
}

/// One realisation of `Ŝ`, grouped into work units.
///
/// For chunked sampling each unit is a chunk; otherwise every coordinate is
/// its own unit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Draw {
    coords: Vec<usize>,
    unit_starts: Vec<usize>,
}

impl Draw {
    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn unit_count(&self) -> usize {
        self.unit_starts.len()
    }

    pub fn units(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.unit_starts.len()).map(move |u| {
            let end = self
                .unit_starts
                .get(u + 1)
                .copied()
                .unwrap_or(self.coords.len());
            &self.coords[self.unit_starts[u]..end]
        })
    }

    fn clear(&mut self) {
        self.coords.clear();
        self.unit_starts.clear();
    }
}

/// Draws subsets from a scheme; holds the permutation scratch used by
/// partial Fisher–Yates.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    scheme: &'a SamplingScheme,
    perm: Vec<usize>,
    draw: Draw,
}

impl Sampler<'_> {
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &Draw {
        self.draw.clear();
        match &self.scheme.kind {
            Kind::SerialUniform => {
                let i = rng.random_range(0..self.scheme.n());
                self.draw.unit_starts.push(0);
                self.draw.coords.push(i);
            }
            Kind::SerialWeighted(table) => {
                self.draw.unit_starts.push(0);
                self.draw.coords.push(table.sample(rng));
            }
            Kind::TauNice(tau) => {
                partial_shuffle(&mut self.perm, *tau, rng);
                self.draw.coords.extend_from_slice(&self.perm[..*tau]);
                self.draw.unit_starts.extend(0..*tau);
            }
            Kind::Chunked { partition, tau } => {
                partial_shuffle(&mut self.perm, *tau, rng);
                for &j in &self.perm[..*tau] {
                    self.draw.unit_starts.push(self.draw.coords.len());
                    self.draw.coords.extend(partition.chunk(j));
                }
            }
        }
        &self.draw
    }
}

/// Moves a uniformly random `count`-subset of `perm` into its prefix.
fn partial_shuffle<R: Rng + ?Sized>(perm: &mut [usize], count: usize, rng: &mut R) {
    let len = perm.len();
    for t in 0..count {
        let j = rng.random_range(t..len);
        perm.swap(t, j);
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let Some(pos) = (0..k).rev().find(|&p| current[p] < n - k + p) else {
            break;
        };
        current[pos] += 1;
        for q in pos + 1..k {
            current[q] = current[q - 1] + 1;
        }
    }
    out
}

fn serial_v(data: &Dataset, factor: f64) -> Vec<f64> {
    data.norms_sq().iter().map(|s| factor * s).collect()
}

/// Single example, uniformly: `p_i = 1/n`, `v_i = ‖A_i‖²`.
pub fn serial_uniform(data: &Dataset) -> SamplingScheme {
    let n = data.n();
    SamplingScheme {
        p: vec![1.0 / n as f64; n],
        v: serial_v(data, 1.0),
        max_card: 1,
        kind: Kind::SerialUniform,
        label: "serial-uniform".into(),
    }
}

/// Single example `i` with probability `p_i`: `v_i = ‖A_i‖²`.
pub fn serial_weighted(p: &[f64], data: &Dataset) -> Result<SamplingScheme> {
    if p.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "{} probabilities for n = {}",
            p.len(),
            data.n()
        )));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "probabilities must be positive, found {bad}"
        )));
    }
    let total: f64 = p.iter().sum();
    let tol = 1e-12 + p.len() as f64 * f64::EPSILON;
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    let table = WeightedIndex::new(p.iter().copied())
        .map_err(|e| Error::InvalidArgument(format!("probabilities: {e}")))?;
    Ok(SamplingScheme {
        p: p.to_vec(),
        v: serial_v(data, 1.0),
        max_card: 1,
        kind: Kind::SerialWeighted(table),
        label: "serial-weighted".into(),
    })
}

/// `p_i ∝ nλ + l_i ‖A_i‖²`, which equalizes the per-example terms
/// `1/p_i + l_i v_i / (λ p_i n)` of the convex rate for `v_i = ‖A_i‖²`.
pub fn importance_probabilities(l: &[f64], norms_sq: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if l.len() != norms_sq.len() || l.is_empty() {
        return Err(Error::InvalidArgument(
            "smoothness and norm vectors must be nonempty and of equal length".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let n = l.len() as f64;
    let weights: Vec<f64> = l
        .iter()
        .zip(norms_sq)
        .map(|(li, s)| n * lambda + li * s)
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Uniform `τ`-subsets: `p_i = τ/n`, `v_i = τ ‖A_i‖²`.
pub fn tau_nice(data: &Dataset, tau: usize) -> Result<SamplingScheme> {
    let n = data.n();
    if tau == 0 || tau > n {
        return Err(Error::InvalidArgument(format!(
            "tau must lie in 1..={n}, got {tau}"
        )));
    }
    Ok(SamplingScheme {
        p: vec![tau as f64 / n as f64; n],
        v: serial_v(data, tau as f64),
        max_card: tau,
        kind: Kind::TauNice(tau),
        label: format!("nice:{tau}"),
    })
}

/// Uniform `τ`-subsets of chunks: `p_i = τ/k`, `v_i = τ g_max ‖A_i‖²`.
pub fn chunked_sampling(
    partition: &ChunkPartition,
    tau: usize,
    data: &Dataset,
) -> Result<SamplingScheme> {
    let k = partition.k();
    if partition.n() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} coordinates, dataset has {}",
            partition.n(),
            data.n()
        )));
    }
    if tau == 0 || tau > k {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} must lie in 1..={k} (number of chunks k = {k})"
        )));
    }
    let max_card = tau * partition.max_size();
    Ok(SamplingScheme {
        p: vec![tau as f64 / k as f64; data.n()],
        v: serial_v(data, max_card as f64),
        max_card,
        kind: Kind::Chunked {
            partition: partition.clone(),
            tau,
        },
        label: format!("chunked:{tau}"),
    })
}

/// Margin below `c` kept by [`random_c_probabilities`].
pub const RANDOM_C_MARGIN: f64 = 0.01;

/// Log-uniform weights in `[1, c(1 - δ)]`, normalized, so `max p / min p < c`.
pub fn random_c_probabilities(n: usize, c: f64, seed: u64) -> Result<Vec<f64>> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "random-c needs c > 1, got {c}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let top = c * (1.0 - RANDOM_C_MARGIN);
    let log_top = if top > 1.0 { top.ln() } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n)
        .map(|_| (rng.random::<f64>() * log_top).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn random_c_sampling(data: &Dataset, c: f64, seed: u64) -> Result<SamplingScheme> {
    let p = random_c_probabilities(data.n(), c, seed)?;
    let mut scheme = serial_weighted(&p, data)?;
    scheme.label = format!("serial-random:{c}");
    Ok(scheme)
}

/// Waiting-time proxy of one draw: the largest unit workload minus the mean
/// unit workload, with workload measured in nonzeros.
pub fn waiting_time(draw: &Draw, nnz: &[usize]) -> f64 {
    if draw.unit_count() == 0 {
        return 0.0;
    }
    let loads = draw
        .units()
        .map(|unit| unit.iter().map(|&i| nnz[i]).sum::<usize>());
    let (max, total) = loads.fold((0usize, 0usize), |(m, t), load| (m.max(load), t + load));
    max as f64 - total as f64 / draw.unit_count() as f64
}

/// Textual sampling descriptors accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeDescriptor {
    SerialUniform,
    SerialImportance,
    SerialRandom(f64),
    Nice(Option<usize>),
    Chunked(Option<usize>),
}

impl FromStr for SchemeDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "invalid sampling descriptor '{s}' (expected serial-uniform, serial-importance, \
                 serial-random:<c>, nice:<tau> or chunked:<tau>)"
            ))
        };
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let tau = |arg: Option<&str>| -> Result<Option<usize>> {
            arg.map(|a| a.parse::<usize>().map_err(|_| bad()))
                .transpose()
        };
        match name {
            "serial-uniform" if arg.is_none() => Ok(SchemeDescriptor::SerialUniform),
            "serial-importance" if arg.is_none() => Ok(SchemeDescriptor::SerialImportance),
            "serial-random" => {
                let c = arg.ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?;
                Ok(SchemeDescriptor::SerialRandom(c))
            }
            "nice" => Ok(SchemeDescriptor::Nice(tau(arg)?)),
            "chunked" => Ok(SchemeDescriptor::Chunked(tau(arg)?)),
            _ => Err(bad()),
        }
    }
}

impl SchemeDescriptor {
    /// Builds the scheme for a dataset.
    ///
    /// `loss_smoothness` (`l_i`) and `lambda` feed the importance distribution;
    /// `default_tau` fills in `nice`/`chunked` descriptors without an explicit
    /// `τ`; `seed` drives `serial-random`.
    pub fn build(
        &self,
        data: &Dataset,
        loss_smoothness: &[f64],
        lambda: f64,
        default_tau: Option<usize>,
        seed: u64,
    ) -> Result<SamplingScheme> {
        let need_tau = |tau: Option<usize>| {
            tau.or(default_tau)
                .ok_or_else(|| Error::InvalidArgument("nice/chunked sampling needs a tau".into()))
        };
        match *self {
            SchemeDescriptor::SerialUniform => Ok(serial_uniform(data)),
            SchemeDescriptor::SerialImportance => {
                let p = importance_probabilities(loss_smoothness, data.norms_sq(), lambda)?;
                let mut scheme = serial_weighted(&p, data)?;
                scheme.label = "serial-importance".into();
                Ok(scheme)
            }
            SchemeDescriptor::SerialRandom(c) => random_c_sampling(data, c, seed),
            SchemeDescriptor::Nice(tau) => tau_nice(data, need_tau(tau)?),
            SchemeDescriptor::Chunked(tau) => {
                let partition = naive_chunks(data.nnz())?;
                chunked_sampling(&partition, need_tau(tau)?, data)
            }
        }
    }
}

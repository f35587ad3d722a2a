//! Sparse example storage, LIBSVM ingestion, normalization and synthetic data.
//!
//! Each example `A_i` is a sparse vector in `R^d` (scalar losses only). The
//! solver touches the data one example at a time, so examples are stored as
//! independent index/value lists rather than in a compressed matrix.

use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sparse vector in canonical form: strictly increasing indices, no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseExample {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseExample {
    /// Builds an example, dropping explicit zeros.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidData(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidData(format!(
                    "indices not strictly increasing: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::InvalidData(format!(
                    "index {last} out of range for dimension {dim}"
                )));
            }
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value {bad}")));
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Squared Euclidean norm, summed left to right.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc + v * v)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Inner product `A_i^T w`.
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .fold(0.0, |acc, (&j, &v)| acc + v * w[j])
    }

    /// `out += scale * A_i`, touching only the support of the example.
    #[inline]
    pub fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] += scale * v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_scaled_to(1.0, &mut out);
        out
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// An immutable collection of `n` examples in `R^d` with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<SparseExample>,
    labels: Vec<f64>,
    dim: usize,
    norms_sq: Vec<f64>,
    nnz: Vec<usize>,
}

impl Dataset {
    pub fn new(examples: Vec<SparseExample>, labels: Vec<f64>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if examples.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        let dim = examples[0].dim;
        if let Some(i) = examples.iter().position(|e| e.dim != dim) {
            return Err(Error::InvalidData(format!(
                "example {i} has dimension {} but example 0 has {dim}",
                examples[i].dim
            )));
        }
        if let Some(bad) = labels.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite label {bad}")));
        }
        let norms_sq = examples.iter().map(SparseExample::norm_sq).collect();
        let nnz = examples.iter().map(SparseExample::nnz).collect();
        Ok(Self {
            examples,
            labels,
            dim,
            norms_sq,
            nnz,
        })
    }

    /// Builds a dataset from dense rows (one row per example).
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| SparseExample::from_dense(r)).collect(),
            labels,
        )
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &SparseExample {
        &self.examples[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Cached `‖A_i‖²`.
    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    /// Cached `nnz(A_i)`.
    pub fn nnz(&self) -> &[usize] {
        &self.nnz
    }

    pub fn total_nnz(&self) -> usize {
        self.nnz.iter().sum()
    }

    /// Maps labels to `{-1, +1}` by sign (`y > 0` is positive).
    pub fn binarize_labels(&self) -> Self {
        let mut out = self.clone();
        for y in &mut out.labels {
            *y = if *y > 0.0 { 1.0 } else { -1.0 };
        }
        out
    }

    /// Replaces the labels, keeping the examples.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::new(self.examples.clone(), labels)
    }
}

/// Euclidean norms `‖A_i‖`.
pub fn example_norms(data: &Dataset) -> Vec<f64> {
    data.norms_sq.iter().map(|s| s.sqrt()).collect()
}

/// Nonzero counts `nnz(A_i)`.
pub fn example_nnz(data: &Dataset) -> Vec<usize> {
    data.nnz.clone()
}

/// Parses LIBSVM / SVMlight text: `label idx:val idx:val ...` with 1-based indices.
///
/// Blank lines and `#` comments are ignored, `qid:` tokens are skipped. The
/// feature dimension is the largest index seen unless `dim` is given, in which
/// case every index must fit within it.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let label = label_tok
            .parse::<f64>()
            .ok()
            .filter(|y| y.is_finite())
            .ok_or_else(|| err(format!("invalid label '{label_tok}'")))?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx_tok, val_tok) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, found '{tok}'")))?;
            if idx_tok == "qid" {
                continue;
            }
            let idx = idx_tok
                .parse::<usize>()
                .map_err(|_| err(format!("invalid feature index '{idx_tok}'")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based; found 0".into()));
            }
            let value = val_tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid feature value '{val_tok}'")))?;
            let zero_based = idx - 1;
            if let Some(&prev) = indices.last() {
                if zero_based == prev {
                    return Err(err(format!("duplicate index {idx}")));
                }
                if zero_based < prev {
                    return Err(err(format!(
                        "non-increasing indices: {} followed by {idx}",
                        prev + 1
                    )));
                }
            }
            max_index = max_index.max(idx);
            indices.push(zero_based);
            values.push(value);
        }
        rows.push((label, indices, values));
    }

    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = match dim {
        Some(d) if d < max_index => {
            return Err(Error::InvalidData(format!(
                "feature index {max_index} exceeds requested dimension {d}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };

    let mut examples = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (label, indices, values) in rows {
        examples.push(SparseExample::new(dim, indices, values)?);
        labels.push(label);
    }
    Dataset::new(examples, labels)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), dim)
}

/// Canonical LIBSVM serialization: single spaces, 1-based indices, shortest
/// round-tripping float formatting.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for (example, label) in data.examples.iter().zip(&data.labels) {
        let _ = write!(out, "{label}");
        for (&j, &v) in example.indices.iter().zip(&example.values) {
            let _ = write!(out, " {}:{v}", j + 1);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// Divide every value by `max_i ‖A_i‖`.
    #[default]
    Global,
    /// Scale each nonzero example to unit norm.
    PerExample,
}

/// Scales the dataset so that `max_i ‖A_i‖ = 1`; returns the original max norm.
pub fn normalize_max_norm(data: &Dataset) -> Result<(Dataset, f64)> {
    normalize(data, NormalizeMode::Global)
}

pub fn normalize(data: &Dataset, mode: NormalizeMode) -> Result<(Dataset, f64)> {
    let max_norm = data
        .norms_sq
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
        .sqrt();
    if max_norm == 0.0 {
        return Err(Error::InvalidData(
            "cannot normalize: every example has zero norm".into(),
        ));
    }
    let examples = data
        .examples
        .iter()
        .map(|e| match mode {
            NormalizeMode::Global => e.scaled(1.0 / max_norm),
            NormalizeMode::PerExample => {
                let norm = e.norm();
                if norm > 0.0 {
                    e.scaled(1.0 / norm)
                } else {
                    e.clone()
                }
            }
        })
        .collect();
    Ok((Dataset::new(examples, data.labels.clone())?, max_norm))
}

/// How labels (and, for `SkewedNnz`, sparsity patterns) are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelModel {
    /// `y = sign(A_i^T w_true)`.
    LinearSign,
    /// `y = A_i^T w_true + noise * N(0, 1)`.
    LinearNoise { noise: f64 },
    /// Sign labels with Pareto-distributed nonzero counts of the given shape.
    SkewedNnz { exponent: f64 },
}

impl FromStr for LabelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let parse_arg = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("invalid label model parameter '{a}'"))
                })
            })
        };
        match name {
            "sign" | "linear-sign" => Ok(LabelModel::LinearSign),
            "noise" | "linear-noise" => Ok(LabelModel::LinearNoise {
                noise: parse_arg(0.1)?,
            }),
            "skewed" | "skewed-nnz" => Ok(LabelModel::SkewedNnz {
                exponent: parse_arg(3.0)?,
            }),
            other => Err(Error::InvalidArgument(format!(
                "unknown label model '{other}' (expected linear-sign, linear-noise or skewed-nnz)"
            ))),
        }
    }
}

/// Deterministic synthetic data.
///
/// Nonzero counts are `Binomial(d, density)` (at least one) for the linear
/// models and `Pareto(scale, exponent)` for `SkewedNnz`, with the scale chosen
/// so the mean count is about `density * d`. Values are standard normal.
pub fn gen_synthetic(
    n: usize,
    d: usize,
    density: f64,
    model: LabelModel,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();

    let binomial = Binomial::new(d as u64, density)
        .map_err(|e| Error::InvalidArgument(format!("density: {e}")))?;
    let pareto = match model {
        LabelModel::SkewedNnz { exponent } => {
            if !(exponent > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "skewed-nnz exponent must be positive, got {exponent}"
                )));
            }
            let mean_target = density * d as f64;
            let scale = if exponent > 1.0 {
                mean_target * (exponent - 1.0) / exponent
            } else {
                mean_target
            };
            Some(
                Pareto::new(scale.max(1.0), exponent)
                    .map_err(|e| Error::InvalidArgument(format!("pareto: {e}")))?,
            )
        }
        _ => None,
    };

    let mut examples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let count = match &pareto {
            Some(p) => {
                let raw: f64 = p.sample(&mut rng);
                (raw.round() as usize).clamp(1, d)
            }
            None => (binomial.sample(&mut rng) as usize).max(1),
        };
        let mut indices = rand::seq::index::sample(&mut rng, d, count).into_vec();
        indices.sort_unstable();
        let values: Vec<f64> = indices
            .iter()
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                if v == 0.0 {
                    1.0
                } else {
                    v
                }
            })
            .collect();
        let margin: f64 = indices
            .iter()
            .zip(&values)
            .map(|(&j, v)| v * w_true[j])
            .sum();
        let label = match model {
            LabelModel::LinearNoise { noise } => {
                let eps: f64 = StandardNormal.sample(&mut rng);
                margin + noise * eps
            }
            _ => {
                if margin >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        examples.push(SparseExample {
            dim: d,
            indices,
            values,
        });
        labels.push(label);
    }
    Dataset::new(examples, labels)
}

//! Scalar per-example losses `φ_i`, their gradients and smoothness constants.
//!
//! `l_i` bounds the Lipschitz constant of `φ_i'`; `L_i` bounds the Lipschitz
//! constant of `w ↦ φ_i'(A_i^T w)` and is derived as `l_i ‖A_i‖`.

use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SparseExample};
use crate::{Error, Result};

/// Largest dimension for which dense Hessian certificates are formed.
pub const DENSE_HESSIAN_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Logistic,
    Squared,
    QuadraticFamily,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "squared" => Ok(LossKind::Squared),
            "quadfam" | "quadratic-family" => Ok(LossKind::QuadraticFamily),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss '{other}' (expected logistic, squared or quadfam)"
            ))),
        }
    }
}

/// The loss attached to a single example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExampleLoss {
    /// `log(1 + exp(-y x))`
    Logistic { label: f64 },
    /// `(x - y)² / 2`
    Squared { target: f64 },
    /// `c x² / 2 + b x`; non-convex when `c < 0`.
    Quadratic { curvature: f64, offset: f64 },
}

impl ExampleLoss {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ExampleLoss::Logistic { label } => softplus(-label * x),
            ExampleLoss::Squared { target } => 0.5 * (x - target) * (x - target),
            ExampleLoss::Quadratic { curvature, offset } => 0.5 * curvature * x * x + offset * x,
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            ExampleLoss::Logistic { label } => -label * sigmoid(-label * x),
            ExampleLoss::Squared { target } => x - target,
            ExampleLoss::Quadratic { curvature, offset } => curvature * x + offset,
        }
    }

    /// Smoothness constant `l_i`.
    pub fn smoothness(&self) -> f64 {
        match *self {
            ExampleLoss::Logistic { label } => 0.25 * label * label,
            ExampleLoss::Squared { .. } => 1.0,
            ExampleLoss::Quadratic { curvature, .. } => curvature.abs(),
        }
    }

    pub fn is_convex(&self) -> bool {
        match *self {
            ExampleLoss::Quadratic { curvature, .. } => curvature >= 0.0,
            _ => true,
        }
    }

    /// `(c, b)` such that `φ(x) = c x²/2 + b x + const`, for quadratic losses.
    pub fn quadratic_coefficients(&self) -> Option<(f64, f64)> {
        match *self {
            ExampleLoss::Logistic { .. } => None,
            ExampleLoss::Squared { target } => Some((1.0, -target)),
            ExampleLoss::Quadratic { curvature, offset } => Some((curvature, offset)),
        }
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-z))` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Value of a single loss at `x`.
pub fn loss_value(loss: &ExampleLoss, x: f64) -> f64 {
    loss.value(x)
}

/// Derivative of a single loss at `x`.
pub fn loss_gradient(loss: &ExampleLoss, x: f64) -> f64 {
    loss.gradient(x)
}

/// Losses for every example of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    per_example: Vec<ExampleLoss>,
}

impl LossSpec {
    /// Logistic loss; labels must be `±1`.
    pub fn logistic(labels: &[f64]) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|y| y.abs() != 1.0) {
            return Err(Error::InvalidData(format!(
                "logistic loss needs labels in {{-1, +1}}, found {bad}"
            )));
        }
        Ok(Self {
            kind: LossKind::Logistic,
            per_example: labels
                .iter()
                .map(|&label| ExampleLoss::Logistic { label })
                .collect(),
        })
    }

    pub fn squared(targets: &[f64]) -> Self {
        Self {
            kind: LossKind::Squared,
            per_example: targets
                .iter()
                .map(|&target| ExampleLoss::Squared { target })
                .collect(),
        }
    }

    /// Quadratic family `c_i x²/2 + b_i x`; every `c_i` must be nonzero.
    pub fn quadratic(curvature: &[f64], offset: &[f64]) -> Result<Self> {
        if curvature.len() != offset.len() {
            return Err(Error::InvalidArgument(
                "curvature and offset lengths differ".into(),
            ));
        }
        if let Some(bad) = curvature.iter().find(|c| **c == 0.0 || !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "curvature must be finite and nonzero (l_i > 0), found {bad}"
            )));
        }
        Ok(Self {
            kind: LossKind::QuadraticFamily,
            per_example: curvature
                .iter()
                .zip(offset)
                .map(|(&curvature, &offset)| ExampleLoss::Quadratic { curvature, offset })
                .collect(),
        })
    }

    /// Logistic or squared loss built from the dataset labels.
    pub fn from_labels(kind: LossKind, data: &Dataset) -> Result<Self> {
        match kind {
            LossKind::Logistic => Self::logistic(data.labels()),
            LossKind::Squared => Ok(Self::squared(data.labels())),
            LossKind::QuadraticFamily => Err(Error::InvalidArgument(
                "quadratic-family losses need explicit curvatures; use build_nonconvex_instance"
                    .into(),
            )),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.per_example.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_example.is_empty()
    }

    pub fn get(&self, i: usize) -> &ExampleLoss {
        &self.per_example[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExampleLoss> {
        self.per_example.iter()
    }

    #[inline]
    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.per_example[i].value(x)
    }

    #[inline]
    pub fn gradient(&self, i: usize, x: f64) -> f64 {
        self.per_example[i].gradient(x)
    }

    pub fn all_convex(&self) -> bool {
        self.per_example.iter().all(ExampleLoss::is_convex)
    }

    pub fn is_quadratic(&self) -> bool {
        self.kind != LossKind::Logistic
    }
}

/// `l_i`, `L_i` and `L = max_i L_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// `l_i`: smoothness of `φ_i` in its scalar argument.
    pub loss: Vec<f64>,
    /// `L_i`: smoothness of `w ↦ φ_i(A_i^T w)` through the gradient map.
    pub composed: Vec<f64>,
    /// `L = max_i L_i`.
    pub max_composed: f64,
}

pub fn smoothness_constants(loss: &LossSpec, data: &Dataset) -> Result<SmoothnessConstants> {
    if loss.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "{} losses for {} examples",
            loss.len(),
            data.n()
        )));
    }
    let l: Vec<f64> = loss.iter().map(ExampleLoss::smoothness).collect();
    let composed: Vec<f64> = l
        .iter()
        .zip(data.norms_sq())
        .map(|(li, s)| li * s.sqrt())
        .collect();
    let max_composed = composed.iter().copied().fold(0.0, f64::max);
    Ok(SmoothnessConstants {
        loss: l,
        composed,
        max_composed,
    })
}

/// Dense `(1/n) Σ c_i A_i A_i^T` for quadratic losses.
pub fn average_hessian(data: &Dataset, loss: &LossSpec) -> Result<DMatrix<f64>> {
    let d = data.dim();
    if d > DENSE_HESSIAN_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} too large for a dense Hessian (limit {DENSE_HESSIAN_LIMIT})"
        )));
    }
    let n = data.n() as f64;
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (example, l) in data.examples().iter().zip(loss.iter()) {
        let (c, _) = l.quadratic_coefficients().ok_or_else(|| {
            Error::InvalidArgument("average Hessian is constant only for quadratic losses".into())
        })?;
        let idx = example.indices();
        let val = example.values();
        for (a, &ja) in idx.iter().enumerate() {
            for (b, &jb) in idx.iter().enumerate() {
                h[(ja, jb)] += c * val[a] * val[b] / n;
            }
        }
    }
    Ok(h)
}

/// Smallest eigenvalue of the average composed Hessian of a quadratic problem.
pub fn average_hessian_min_eigenvalue(data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let h = average_hessian(data, loss)?;
    Ok(SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Fails with [`Error::NotConvex`] unless `(1/n) Σ φ_i(A_i^T w)` is convex in `w`
/// (minimum eigenvalue at least `-1e-10`).
pub fn certify_average_convexity(data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let min_eigenvalue = average_hessian_min_eigenvalue(data, loss)?;
    if min_eigenvalue < -1e-10 {
        return Err(Error::NotConvex { min_eigenvalue });
    }
    Ok(min_eigenvalue)
}

/// A quadratic-family instance whose individual losses include non-convex ones
/// while `w ↦ (1/n) Σ φ_i(A_i^T w)` stays convex.
///
/// Examples are split into `g = min(d, n/2)` groups; every member of group `j`
/// is a positive multiple of the same unit direction `q_j` taken from a random
/// orthonormal basis. The first member of each group gets a negative curvature
/// equal to half of the group's positive curvature mass, so the aggregate
/// curvature along `q_j` is strictly positive and the directions don't interact.
pub fn build_nonconvex_instance(n: usize, d: usize, seed: u64) -> Result<(Dataset, LossSpec)> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "a non-convex instance needs n >= 2".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if d > DENSE_HESSIAN_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} exceeds the certificate limit {DENSE_HESSIAN_LIMIT}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (n / 2).min(d).max(1);

    let gaussian = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let basis = gaussian.qr().q();

    let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut curvature = vec![0.0; n];
    for c in &mut curvature[groups..] {
        *c = rng.random_range(1.0..3.0);
    }
    for j in 0..groups {
        let positive_mass: f64 = (j + groups..n)
            .step_by(groups)
            .map(|i| curvature[i] * scales[i] * scales[i])
            .sum();
        curvature[j] = -0.5 * positive_mass / (scales[j] * scales[j]);
    }
    let offset: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let examples = (0..n)
        .map(|i| {
            let q = basis.column(i % groups);
            let dense: Vec<f64> = q.iter().map(|v| v * scales[i]).collect();
            SparseExample::from_dense(&dense)
        })
        .collect();
    let data = Dataset::new(examples, offset.clone())?;
    let loss = LossSpec::quadratic(&curvature, &offset)?;
    certify_average_convexity(&data, &loss)?;
    Ok((data, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use proptest::prelude::*;

    fn central_difference(loss: &ExampleLoss, x: f64) -> f64 {
        let h = 1e-6;
        (loss.value(x + h) - loss.value(x - h)) / (2.0 * h)
    }

    #[test]
    fn logistic_at_zero() {
        let l = ExampleLoss::Logistic { label: 1.0 };
        assert!((loss_value(&l, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss_gradient(&l, 0.0), -0.5);
    }

    #[test]
    fn squared_minimum() {
        let l = ExampleLoss::Squared { target: 3.0 };
        assert_eq!(l.value(3.0), 0.0);
        assert_eq!(l.gradient(3.0), 0.0);
    }

    #[test]
    fn logistic_is_overflow_safe() {
        // log1p(exp(1000)) = 1000 + log1p(exp(-1000)) and exp(-1000) underflows to 0.
        let l = ExampleLoss::Logistic { label: 1.0 };
        let v = l.value(-1000.0);
        assert!(v.is_finite());
        assert!((v - 1000.0).abs() <= 1e-12);
        let g = l.gradient(-1000.0);
        assert!((g + 1.0).abs() <= 1e-15);
        let far = l.value(1000.0);
        assert!((0.0..1e-300).contains(&far));
    }

    #[test]
    fn smoothness_examples() {
        let data = Dataset::from_dense(&[vec![2.0, 0.0]], vec![1.0]).unwrap();
        let s = smoothness_constants(&LossSpec::logistic(data.labels()).unwrap(), &data).unwrap();
        assert_eq!(s.loss, vec![0.25]);
        assert_eq!(s.composed, vec![0.5]);

        let unit = Dataset::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
        let s = smoothness_constants(&LossSpec::squared(unit.labels()), &unit).unwrap();
        assert_eq!(s.max_composed, 1.0);

        let q = LossSpec::quadratic(&[-1.0, 3.0], &[0.0, 0.0]).unwrap();
        let s = smoothness_constants(&q, &unit).unwrap();
        assert_eq!(s.loss, vec![1.0, 3.0]);
        assert_eq!(s.max_composed, 3.0);
    }

    #[test]
    fn zero_norm_example_has_zero_composed_constant() {
        let data = Dataset::from_dense(&[vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let q = LossSpec::quadratic(&[2.0, 1.0], &[1.0, 0.0]).unwrap();
        let s = smoothness_constants(&q, &data).unwrap();
        assert_eq!(s.composed[0], 0.0);
    }

    #[test]
    fn logistic_requires_signed_labels() {
        assert!(LossSpec::logistic(&[1.0, 0.0]).is_err());
        assert!(LossSpec::quadratic(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn one_dimensional_average_convexity() {
        let data = Dataset::from_dense(&[vec![1.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
        let q = LossSpec::quadratic(&[-1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(!q.get(0).is_convex());
        let min = certify_average_convexity(&data, &q).unwrap();
        assert!((min - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_layout_with_negative_curvature_is_rejected() {
        let data = Dataset::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let q = LossSpec::quadratic(&[-1.0, 3.0], &[0.0, 0.0]).unwrap();
        match certify_average_convexity(&data, &q) {
            Err(Error::NotConvex { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.5).abs() < 1e-15)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonconvex_instance_shape() {
        let (data, loss) = build_nonconvex_instance(10, 4, 1).unwrap();
        assert_eq!(data.n(), 10);
        assert_eq!(data.dim(), 4);
        assert!(!loss.all_convex());
        assert!(loss.iter().filter(|l| !l.is_convex()).count() >= 1);
        assert!(data.norms_sq().iter().all(|&s| s > 0.0));
        assert!(build_nonconvex_instance(1, 4, 1).is_err());
        let (tiny, _) = build_nonconvex_instance(2, 1, 5).unwrap();
        assert_eq!(tiny.n(), 2);
    }

    fn arb_loss() -> impl Strategy<Value = ExampleLoss> {
        prop_oneof![
            prop_oneof![Just(1.0), Just(-1.0)].prop_map(|label| ExampleLoss::Logistic { label }),
            (-5.0..5.0f64).prop_map(|target| ExampleLoss::Squared { target }),
            (
                (0.1..4.0f64),
                prop_oneof![Just(1.0), Just(-1.0)],
                -3.0..3.0f64
            )
                .prop_map(|(c, sign, offset)| ExampleLoss::Quadratic {
                    curvature: c * sign,
                    offset
                }),
        ]
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_difference(loss in arb_loss(), x in -20.0..20.0f64) {
            let g = loss.gradient(x);
            let fd = central_difference(&loss, x);
            prop_assert!((g - fd).abs() <= 1e-5 * (1.0 + g.abs()), "g {} fd {}", g, fd);
        }

        #[test]
        fn gradient_is_l_lipschitz(loss in arb_loss(), x in -30.0..30.0f64, y in -30.0..30.0f64) {
            let lhs = (loss.gradient(x) - loss.gradient(y)).abs();
            prop_assert!(lhs <= loss.smoothness() * (x - y).abs() + 1e-12);
        }

        #[test]
        fn composed_gradient_is_big_l_lipschitz(
            loss in arb_loss(),
            a in proptest::collection::vec(-2.0..2.0f64, 3),
            w in proptest::collection::vec(-5.0..5.0f64, 3),
            z in proptest::collection::vec(-5.0..5.0f64, 3),
        ) {
            let data = Dataset::from_dense(&[a], vec![1.0]).unwrap();
            let spec = LossSpec { kind: LossKind::Squared, per_example: vec![loss] };
            let s = smoothness_constants(&spec, &data).unwrap();
            let e = data.example(0);
            let lhs = (loss.gradient(e.dot(&w)) - loss.gradient(e.dot(&z))).abs();
            let dist = w.iter().zip(&z).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            prop_assert!(lhs <= s.composed[0] * dist + 1e-12);
        }
    }
}

//! Dual-free SDCA with arbitrary mini-batch sampling.
//!
//! Minimizes `P(w) = (1/n) Σ φ_i(A_i^T w) + (λ/2)‖w‖²` for scalar losses
//! `φ_i` that need not be convex individually, by keeping one dual-like
//! variable `α_i` per example and updating a random subset of them per step.
//!
//! * [`dataset`]: sparse examples, LIBSVM I/O, normalization, generators.
//! * [`losses`]: logistic, squared and quadratic-family losses with their
//!   smoothness constants.
//! * [`sampling`]: serial, `τ`-nice and chunked samplings, ESO parameters and
//!   the Naive Chunks partitioner.
//! * [`solver`]: the iteration, theory stepsizes and traced runs.
//! * [`diagnostics`]: reference solutions, potentials and exact checks of the
//!   expected-decrease inequalities.
//! * [`suites`]: randomized validator suites built on the checks above.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
mod error;
pub mod exec;
pub mod losses;
pub mod sampling;
pub mod solver;
pub mod suites;

pub use error::{Error, Result};
pub use exec::Execution;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed LIBSVM input. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: no examples found")]
    EmptyInput,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The dual update for coordinate `index` would not be a convex combination.
    #[error("stepsize theta = {theta} exceeds sampling probability p[{index}] = {probability}")]
    ThetaExceedsProbability {
        theta: f64,
        index: usize,
        probability: f64,
    },

    #[error("divergence at iteration {iteration}: P(w) = {primal} exceeds guard {guard}")]
    Diverged {
        iteration: u64,
        primal: f64,
        guard: f64,
    },

    #[error("reference oracle stopped after {iterations} iterations with gradient norm {grad_norm:e} (target {target:e})")]
    OracleNotConverged {
        iterations: usize,
        grad_norm: f64,
        target: f64,
    },

    #[error("average composed loss is not convex: minimum Hessian eigenvalue {min_eigenvalue:e}")]
    NotConvex { min_eigenvalue: f64 },

    #[error("sampling has {atoms} atoms, above the enumeration limit {limit}")]
    NotEnumerable { atoms: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

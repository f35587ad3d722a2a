//! Data loading and problem construction shared by the subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use dfsdca::dataset::{gen_synthetic, normalize, parse_libsvm, Dataset, LabelModel, NormalizeMode};
use dfsdca::losses::{build_nonconvex_instance, certify_average_convexity, LossKind, LossSpec};
use dfsdca::solver::Problem;

use crate::error::{io_error, CliError, CliResult};

/// `n,d,density,model`, e.g. `200,50,0.1,sign` or `2000,1000,0.02,skewed:3`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub density: f64,
    pub model: LabelModel,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = |what: &str| {
            format!("invalid synthetic descriptor '{s}': {what} (expected n,d,density,model)")
        };
        if parts.len() != 4 {
            return Err(bad("need four comma-separated fields"));
        }
        Ok(SyntheticSpec {
            n: parts[0].parse().map_err(|_| bad("n"))?,
            d: parts[1].parse().map_err(|_| bad("d"))?,
            density: parts[2].parse().map_err(|_| bad("density"))?,
            model: parts[3].parse().map_err(|e: dfsdca::Error| e.to_string())?,
        })
    }
}

/// An absolute `λ` or the `1/n` token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    InverseN,
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "1/n" {
            return Ok(LambdaSpec::InverseN);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaSpec::Value(v)),
            _ => Err(format!(
                "invalid lambda '{s}' (expected a positive number or 1/n)"
            )),
        }
    }
}

impl LambdaSpec {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            LambdaSpec::Value(v) => v,
            LambdaSpec::InverseN => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    Global,
    PerExample,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// LIBSVM file.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub data: Option<PathBuf>,
    /// Synthetic data `n,d,density,model` with model sign, noise[:x] or skewed[:exponent].
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    /// Feature dimension for LIBSVM input (default: largest index seen).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Rescale examples before solving.
    #[arg(long)]
    pub normalize: bool,
    /// Global divides by max ‖A_i‖; per-example scales rows to unit norm.
    #[arg(long, value_enum, default_value = "global")]
    pub normalize_mode: NormalizeArg,
}

impl DataArgs {
    pub fn describe(&self) -> String {
        match (&self.data, &self.synthetic) {
            (Some(path), _) => path.display().to_string(),
            (None, Some(s)) => format!(
                "synthetic n={} d={} density={} model={:?} seed={}",
                s.n, s.d, s.density, s.model, self.data_seed
            ),
            (None, None) => String::new(),
        }
    }

    /// Loads (and optionally normalizes) the dataset. Returns the max row norm
    /// used for normalization, if any.
    pub fn load(&self) -> CliResult<(Dataset, Option<f64>)> {
        let data = match (&self.data, &self.synthetic) {
            (Some(path), _) => {
                let file = File::open(path).map_err(|e| io_error(path, e))?;
                parse_libsvm(BufReader::new(file), self.dim)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            }
            (None, Some(s)) => gen_synthetic(s.n, s.d, s.density, s.model, self.data_seed)?,
            (None, None) => {
                return Err(CliError::Usage(
                    "one of --data or --synthetic is required".into(),
                ))
            }
        };
        self.finish(data)
    }

    fn finish(&self, data: Dataset) -> CliResult<(Dataset, Option<f64>)> {
        if !self.normalize {
            return Ok((data, None));
        }
        let mode = match self.normalize_mode {
            NormalizeArg::Global => NormalizeMode::Global,
            NormalizeArg::PerExample => NormalizeMode::PerExample,
        };
        let (data, max_norm) = normalize(&data, mode)?;
        Ok((data, Some(max_norm)))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// logistic, squared or quadfam (quadfam builds its own synthetic instance).
    #[arg(long, default_value = "logistic")]
    pub loss: LossKind,
    /// Regularization strength, or `1/n`.
    #[arg(long, default_value = "1/n")]
    pub lambda: LambdaSpec,
}

pub struct Built {
    pub problem: Problem,
    pub max_norm: Option<f64>,
}

impl ProblemArgs {
    pub fn build(&self) -> CliResult<Built> {
        let (data, loss, max_norm) = match self.loss {
            LossKind::QuadraticFamily => {
                let Some(s) = &self.data.synthetic else {
                    return Err(CliError::Usage(
                        "--loss quadfam needs --synthetic (its curvatures are generated with the data)".into(),
                    ));
                };
                let (data, loss) = build_nonconvex_instance(s.n, s.d, self.data.data_seed)?;
                let (data, max_norm) = self.data.finish(data)?;
                // Per-example rescaling can break the convexity of the average.
                certify_average_convexity(&data, &loss)?;
                (data, loss, max_norm)
            }
            kind => {
                let (data, max_norm) = self.data.load()?;
                let data = if kind == LossKind::Logistic {
                    data.binarize_labels()
                } else {
                    data
                };
                let loss = LossSpec::from_labels(kind, &data)?;
                (data, loss, max_norm)
            }
        };
        let lambda = self.lambda.resolve(data.n());
        Ok(Built {
            problem: Problem::new(data, loss, lambda)?,
            max_norm,
        })
    }
}

pub fn loss_name(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Logistic => "logistic",
        LossKind::Squared => "squared",
        LossKind::QuadraticFamily => "quadfam",
    }
}

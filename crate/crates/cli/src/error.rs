use thiserror::Error;

/// Command failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or parameter values (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or unsuitable data (exit 2).
    #[error("{0}")]
    Data(String),
    /// Divergence, oracle failure or a failed validation check (exit 3).
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Failure(_) => 3,
        }
    }
}

impl From<dfsdca::Error> for CliError {
    fn from(e: dfsdca::Error) -> Self {
        use dfsdca::Error::*;
        let message = e.to_string();
        match e {
            Parse { .. } | EmptyInput | InvalidData(_) | NotConvex { .. } => {
                CliError::Data(message)
            }
            InvalidArgument(_) | ThetaExceedsProbability { .. } | NotEnumerable { .. } => {
                CliError::Usage(message)
            }
            Diverged { .. } | OracleNotConverged { .. } => CliError::Failure(message),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::config::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("dense storage refused for n = {n} (limit {limit}); use slab streaming")]
    DenseTooLarge { n: usize, limit: usize },

    #[error("norm drifted to {norm:.3e} from {initial:.3e} at step {step}")]
    NormDrift { step: usize, norm: f64, initial: f64 },

    #[error("state not resolved on grid: {0}")]
    Unresolved(String),

    #[error("reduced density has eigenvalue {0:.3e} below the clipping floor")]
    NegativeEigenvalue(f64),

    #[error("convergence check failed: {0}")]
    Convergence(String),

    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed field dump: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidArgument(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 4,
            _ => 3,
        }
    }
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    lines.join("\n")
}

use thiserror::Error;

/// Errors raised by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index set mismatch: {left} vs {right} basis functions")]
    IndexSetMismatch { left: usize, right: usize },

    #[error("Neumann datum has nonzero mean {mean:e} (relative {relative:e})")]
    IncompatibleNeumann { mean: f64, relative: f64 },

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("phantom rejected: {0}")]
    Phantom(String),

    #[error("extrapolation rejected: {0}")]
    Extrapolation(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::IndexSetMismatch { .. } => "index_set_mismatch",
            Error::IncompatibleNeumann { .. } => "incompatible_neumann",
            Error::NotConverged { .. } => "not_converged",
            Error::Phantom(_) => "phantom",
            Error::Extrapolation(_) => "extrapolation",
            Error::UnsupportedDomain(_) => "unsupported_domain",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

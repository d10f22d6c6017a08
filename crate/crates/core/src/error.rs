use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by the exit-code class the command-line driver maps
/// them to: validation, numerical failure, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("gamma overflow for argument {0}")]
    Overflow(f64),

    #[error("no sign change bracketing zero {n} of J_{nu}")]
    BracketFailure { nu: f64, n: usize },

    #[error("{0} requires the {1} regime")]
    Regime(&'static str, &'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Exit-code class of an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::Regime(..)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_)
            | Error::Json(_) => ErrorClass::Validation,
            Error::Overflow(_)
            | Error::BracketFailure { .. }
            | Error::Conditioning(_)
            | Error::LineSearch(_) => ErrorClass::Numerical,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

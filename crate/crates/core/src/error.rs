use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants are grouped by how a caller should react: bad input
/// (`InvalidParameter`, `Config`, `Precondition`, `MissingObservable`),
/// numerical trouble (`Numeric`, `TooLarge`, `Truncation`, `Divergent`),
/// or a Monte Carlo diagnostic that did not meet its contract.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("observable not recorded: {0}")]
    MissingObservable(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("instance too large: {what} needs {required} evaluations, limit is {limit}")]
    TooLarge {
        what: String,
        required: f64,
        limit: f64,
    },

    #[error("spectral truncation tail {tail:.3e} exceeds tolerance {tolerance:.3e}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("lattice sum diverges: {0}")]
    Divergent(String),

    #[error("Monte Carlo diagnostic failed: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Config(_)
                | Error::Precondition(_)
                | Error::MissingObservable(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")))
    }
}

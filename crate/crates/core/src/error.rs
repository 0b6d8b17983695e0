use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum MpError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant `{check}` violated: {detail}")]
    Invariant { check: String, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid rejected: {0}")]
    GridRejected(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpError {
    pub fn invariant(check: &str, detail: impl Into<String>) -> Self {
        MpError::Invariant { check: check.into(), detail: detail.into() }
    }
}

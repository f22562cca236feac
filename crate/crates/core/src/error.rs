use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum SgpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Gauss–Newton produced a non-finite iterate.
    #[error("divergence after {iteration} iterations: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        last_finite: Vec<f64>,
    },

    #[error("ingestion error at row {row}: {reason}")]
    Ingestion { row: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SgpError {
    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SgpError::NumericalFailure(_) | SgpError::Divergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, SgpError>;

use thiserror::Error;

use crate::dyadic::DyadicCube;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight is singular at {point:?}")]
    Domain { point: Vec<f64> },

    #[error("window is empty or malformed: {0}")]
    EmptyWindow(String),

    #[error("window holds {count} cubes, more than the limit {limit}")]
    WindowTooLarge { count: u128, limit: u128 },

    #[error("sequence support is not contained in the window (cube {0})")]
    SupportOutsideWindow(DyadicCube),

    #[error("no reducing operator for cube {0}")]
    MissingReducingOperator(DyadicCube),

    #[error("fitted matrix is not positive definite, spectrum {spectrum:?}")]
    NotPositiveDefinite { spectrum: Vec<f64> },

    #[error("rule {rule} does not apply: {reason}")]
    RuleNotApplicable { rule: String, reason: String },

    #[error("no reference norm for family {0}")]
    NoReference(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::EmptyWindow(_)
                | Error::SupportOutsideWindow(_)
                | Error::RuleNotApplicable { .. }
                | Error::NoReference(_)
                | Error::DimensionMismatch { .. }
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::WindowTooLarge { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

use crate::Nanos;

pub type Result<T, E = AoiError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AoiError {
    #[error("no effective updates")]
    NoEffectiveUpdates,

    #[error("non-positive horizon: {0} ns")]
    NonPositiveHorizon(Nanos),

    #[error("penalty parameter alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),

    #[error("penalty argument {0} s outside the penalty domain")]
    PenaltyDomain(f64),

    #[error("bias outside penalty domain")]
    BiasOutsideDomain,

    #[error("penalty value is not finite")]
    NonFinite,

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AoiError {
    fn from(err: std::io::Error) -> Self {
        AoiError::Io(err.to_string())
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset must contain at least one point")]
    EmptyDataset,

    #[error("center set must contain at least one center")]
    EmptyCenters,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },

    #[error("point {index} has norm {norm} outside the ball of radius {lambda}")]
    OutsideBall { index: usize, norm: f64, lambda: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("enumeration too large: {reason}")]
    EnumerationTooLarge { reason: String },

    #[error("k = {k} exceeds the number of available points ({available})")]
    TooFewPoints { k: usize, available: usize },

    #[error("infeasible LSH parameters: {reason}")]
    InfeasibleLsh { reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("budget ledger violation: {0}")]
    Ledger(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must be finite and positive, got {epsilon}")))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(invalid("beta", format!("must lie in (0, 1), got {beta}")))
    }
}

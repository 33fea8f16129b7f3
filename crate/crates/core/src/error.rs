use thiserror::Error;

/// Errors raised by the coordination toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("conditioning on zero-probability event: axis {axis} = symbol {symbol}")]
    ZeroProbabilityEvent { axis: usize, symbol: usize },

    #[error("enumeration of {count} encoder pairs exceeds budget {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("strategy violation in round {round}: {reason}")]
    StrategyViolation { round: usize, reason: String },

    #[error("target is infeasible for this scheme (slack {slack:.6} bits)")]
    InfeasibleTarget { slack: f64 },
}

pub type Result<T> = std::result::Result<T, CoordError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoordError::InvalidArguments(msg.into()))
}

use thiserror::Error;

/// Errors raised by constructors and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid valuation: {0}")]
    InvalidValuation(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate valuation: v(1) = 0, curvature undefined")]
    DegenerateValuation,

    #[error("curvature must exceed 1, got {0}")]
    CurvatureOutOfRange(f64),

    #[error("unbounded initial derivative: {0}")]
    UnboundedDerivative(String),

    #[error("enumeration too large: product of support sizes {0} exceeds {1}")]
    EnumerationTooLarge(u128, u128),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid jump measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid characteristics: {0}")]
    InvalidCharacteristics(String),
    /// The birth measure is zero, so no particle ever splits.
    #[error("degenerate configuration: the birth measure is zero")]
    Degenerate,
    /// Golden-section and derivative bisection disagree on the minimiser of κ.
    #[error("minimiser cross-check failed: golden-section {golden} vs bisection {bisection}")]
    MinimiserMismatch { golden: f64, bisection: f64 },
    #[error("tilt selection failed: {0}")]
    TiltSelection(String),
    #[error("hypothesis (H) does not hold: {0}")]
    HypothesisFails(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

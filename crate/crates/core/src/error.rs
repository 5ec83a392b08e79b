use thiserror::Error;

/// Errors raised by calibration, verification and accounting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("{routine} did not converge within {iterations} iterations")]
    MaxIterations { routine: &'static str, iterations: usize },
    #[error("quadrature on [{a}, {b}] failed ({reason}): error {err:e} above target {target:e}")]
    Quadrature { a: f64, b: f64, err: f64, target: f64, reason: String },
    #[error("shortfall evaluation failed at phi = {phi}: {source}")]
    Shortfall { phi: f64, source: Box<DpError> },
    #[error("shift grid of {points} points exceeds the cap of {cap}; raise eta or delta")]
    GridTooLarge { points: u64, cap: u64 },
    #[error("unsupported mechanism: {0}")]
    Unsupported(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, DpError>;

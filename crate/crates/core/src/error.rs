use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("survival underflow at x = {x}: survival is below {floor:e}")]
    SurvivalUnderflow { x: f64, floor: f64 },

    #[error("time {t} is outside the simulated window [{start}, {horizon}]")]
    OutsideWindow { t: f64, start: f64, horizon: f64 },

    #[error("event times must be strictly increasing (event {index} at t = {time})")]
    UnorderedEvents { index: usize, time: f64 },

    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("goodness-of-fit needs at least two bins after pooling")]
    TooFewBins,

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {value}")))
    }
}

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain {lower:?}..{upper:?}")]
    OutsideDomain {
        point: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("density integrates to {integral} over its domain, expected 1 within {tolerance:e}")]
    Normalization { integral: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("perplexity target {target} is unachievable at point {index}: feasible range is ({low}, {high}]")]
    Unachievable {
        index: usize,
        target: f64,
        low: f64,
        high: f64,
    },

    #[error("bandwidth solver did not converge at point {index} after {steps} steps (relative residual {residual:e})")]
    NoConvergence {
        index: usize,
        steps: usize,
        residual: f64,
    },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("optimizer diverging: energy increased for {steps} consecutive steps (last step {step})")]
    Diverging { step: usize, steps: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation not applicable: {0}")]
    NotApplicable(String),

    #[error("normalizing function has no solution: {0}")]
    NoSolution(String),

    #[error("search box too small: integrand positive on the boundary at {0:?}")]
    SearchBoxTooSmall([f64; 2]),

    #[error("rejection sampler exceeded {0} proposals")]
    SamplingFailure(u64),

    #[error("parameterization out of domain: {0}")]
    OutOfDomain(String),

    #[error("gradient failure: objective not finite at probe {0}")]
    GradientFailure(usize),

    #[error("state left the model domain (x = {0})")]
    Truncated(f64),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no stationary point within {iterations} iterations (gradient norm {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular pushforward Jacobian at particle {particle}; step size too large")]
    SingularJacobian { particle: usize },

    #[error("diffeomorphism margin {margin} >= 1; step rejected")]
    StepTooLarge { margin: f64 },

    #[error("log-density is not tracked on this ensemble")]
    MissingLogDensity,

    #[error("target has no known log normalizing constant")]
    MissingLogNormalizer,

    #[error("target has no exact sampler")]
    MissingSampler,

    #[error("transport problem of size {size} exceeds the cap of {cap} points")]
    TransportTooLarge { size: usize, cap: usize },

    #[error("moment generating function estimate diverges at every grid value of beta")]
    MgfDivergence,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}

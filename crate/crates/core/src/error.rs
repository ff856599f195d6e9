use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("rate is defined on [{expected}, inf) but was used from {found}")]
    DomainMismatch { expected: f64, found: f64 },

    #[error("level {level} lies below the rate domain start {domain_start}")]
    BelowDomain { level: f64, domain_start: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    /// The rate ODE was not certified to have a unique solution.
    #[error("uniqueness not certified: {0}")]
    NotCertified(String),

    #[error("not representable: {0}")]
    Unrepresentable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

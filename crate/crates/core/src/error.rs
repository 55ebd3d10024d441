use thiserror::Error;

/// Errors raised by the construction, meshing, and certification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("malformed complex: {0}")]
    Structure(String),

    #[error("point lies on the cycle carrier (distance {0:e})")]
    OnCarrier(f64),

    #[error("layout violation: {0}")]
    Layout(String),

    #[error("unreliable quotient: {0}")]
    UnreliableQuotient(String),

    #[error("format mismatch: {0}")]
    Format(String),

    #[error("missing upstream artifact: {0}")]
    Dependency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

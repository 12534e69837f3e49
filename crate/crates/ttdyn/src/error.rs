use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate local state at site {site}")]
    DegenerateLocalState { site: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("contract order: {0}")]
    ContractOrder(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("system too large for dense oracle: dimension {dim} exceeds {cap}")]
    SystemTooLarge { dim: usize, cap: usize },

    #[error("unstable step at t = {time}")]
    UnstableStep { time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

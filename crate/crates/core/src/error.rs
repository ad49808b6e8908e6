use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("size limit exceeded: {requested} vertices requested, limit is {limit}")]
    Size { requested: usize, limit: usize },

    #[error("wired restriction failed: {0}")]
    Restriction(String),

    #[error("path enumeration length {requested} exceeds cap {cap}")]
    Enumeration { requested: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("factorization failed at pivot {index}: value {pivot:e} below threshold {threshold:e}")]
    Factorization {
        index: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("numeric failure: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("conditioning failed: {0}")]
    Conditioning(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("statistical test input rejected: {0}")]
    TestInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replica {index} failed: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

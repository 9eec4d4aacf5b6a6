use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad shapes, incompatible layer widths, bad hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values where finite math is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// API misuse, e.g. backward without a live forward tape.
    #[error("usage error: {0}")]
    Usage(String),

    /// A request outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The bias normalizer |E[Q^pi]| is too close to zero to divide by.
    #[error("degenerate normalizer: |{0}| < 1e-9")]
    DegenerateNormalizer(f64),

    /// Training produced a non-finite loss; the run cannot continue.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("enumeration budget exceeded: n = {n} (limit {limit})")]
    Budget { n: usize, limit: usize },

    #[error("no hits: {0}")]
    ZeroHit(String),

    #[error("chain did not converge: {0}")]
    ChainNonConvergence(String),

    #[error("non-finite value: {0}")]
    NotFinite(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("malformed matrix fixture: {0}")]
    Fixture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("quantile level {0} is outside (0, 1)")]
    QuantileLevel(f64),

    #[error("solver did not converge after {iterations} iterations (duality gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("model file error: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, Error>;

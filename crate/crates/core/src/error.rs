use thiserror::Error;

/// Errors raised by the optimization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rate undefined for user {n}, server {m}: zero bandwidth share")]
    RateUndefined { n: usize, m: usize },
    #[error("model degeneracy: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible start point: {0}")]
    InfeasibleStart(String),
    #[error("problem reported infeasible")]
    Infeasible,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("extraction degenerate: corner entry {0:e}")]
    ExtractionDegenerate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (asymmetry {asymmetry:e} exceeds {tolerance:e})")]
    Asymmetric { asymmetry: f64, tolerance: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid agent id {id} (network has {n} agents)")]
    InvalidAgent { id: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("weight on edge ({to}, {from}) is not definite")]
    IndefiniteWeight { to: usize, from: usize },
    #[error("step size {tau} outside the admissible range (0, {upper})")]
    TauOutOfRange { tau: f64, upper: f64 },
    #[error("step-size denominator is not positive ({0})")]
    NonPositiveDenominator(f64),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("eigenvalue computation did not converge for a {0}x{0} matrix")]
    EigenFailure(usize),
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("network digest mismatch: trace expects {expected}, network is {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} qubits, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian: {0}")]
    NotHermitian(String),

    #[error("site {site} out of range for a chain of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested combination of method/backend/model cannot be run.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("drive has no support on requested band")]
    NoDriveSupport,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

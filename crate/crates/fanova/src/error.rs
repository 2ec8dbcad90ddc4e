use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Two grid functions live on different domains.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// Input violates a structural precondition (sizes, ranges, labels).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The covariance estimator is undefined (some group has fewer than two
    /// observations); the caller should fall back to permutation calibration.
    #[error("degenerate covariance estimator: {0}; use the permutation calibration instead")]
    DegenerateEstimator(String),

    /// A numerical routine failed (eigendecomposition, singular matrix, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed dataset or configuration file.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 1,
            Error::DomainMismatch(_) | Error::Data(_) | Error::Io(_) => 2,
            Error::DegenerateEstimator(_) | Error::Numerical(_) => 3,
        }
    }
}

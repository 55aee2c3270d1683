use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Leading coefficient too small to define a degree-K polynomial.
    #[error("degenerate polynomial: leading coefficient magnitude {0:e}")]
    DegeneratePolynomial(f64),

    #[error("QR iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    /// Two eigenvalues closer than the simple-eigenvalue threshold.
    #[error("degenerate spectrum: minimum eigenvalue gap {0:e}")]
    DegenerateSpectrum(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("curve `{0}` does not bracket the target BLER")]
    NotBracketed(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("matrix is not Hermitian (max asymmetry {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("complex energy must satisfy Im z > 0 (got Im z = {im})")]
    NotInUpperHalfPlane { im: f64 },

    #[error("site field has {got} entries but the box has {expected} sites")]
    BoxMismatch { expected: usize, got: usize },

    #[error("linear system is numerically singular (smallest singular value {smallest_singular_value:e})")]
    Singular { smallest_singular_value: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("{failures} of {total} samples failed, above the 5% tolerance")]
    TooManyFailures { failures: usize, total: usize },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

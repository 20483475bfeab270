use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every singular value feeding a power allocation is zero.
    #[error("degenerate channel: no stream has a non-zero gain")]
    DegenerateChannel,

    /// Post-combining noise covariance cannot be inverted reliably.
    #[error("ill-conditioned noise covariance (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("search space of {size} evaluations exceeds the ceiling of {ceiling}")]
    SearchTooLarge { size: u128, ceiling: u128 },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Whether the error marks a numerically degenerate trial rather than a
    /// usage error.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateChannel | Error::IllConditioned { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared across the library.
//!
//! Variants are grouped by how the CLI maps them to exit codes: invalid
//! configuration or arguments exit with 2, numeric failures with 3, and I/O
//! failures with 4.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or ensemble dimension outside the supported range.
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: String },

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: String,
    },

    /// Caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file or derived experiment configuration is invalid.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Numeric routine failed to converge or produced non-finite output.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Eigensolver diagnostics for a matrix it could not decompose.
    #[error(
        "eigendecomposition failed for dim {dim}: residual {residual:.3e} \
         exceeds tolerance (max |H| = {max_abs:.3e})"
    )]
    EigenFailure {
        dim: usize,
        residual: f64,
        max_abs: f64,
    },

    /// Collision-free mass too small to condition on.
    #[error("degenerate conditioning: collision-free mass {raw_mass:.3e} below {threshold:.1e}")]
    DegenerateConditioning { raw_mass: f64, threshold: f64 },

    /// Series or spectrum carries no usable signal.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Count record with no retained shots.
    #[error("empty count record: no retained shots")]
    EmptyRecord,

    /// Matrix size beyond the practical permanent bound.
    #[error("unsupported matrix size {n}: permanent evaluation is capped at {bound}")]
    UnsupportedSize { n: usize, bound: usize },

    /// Underlying I/O failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV serialization failure.
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 invalid config/arguments, 3 numeric
    /// failure, 4 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDimension { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidConfig(_)
            | Error::UnsupportedSize { .. } => 2,
            Error::NumericFailure(_)
            | Error::EigenFailure { .. }
            | Error::DegenerateConditioning { .. }
            | Error::DegenerateInput(_)
            | Error::EmptyRecord => 3,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 4,
        }
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

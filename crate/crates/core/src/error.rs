use thiserror::Error;

/// Errors produced by the estimation pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("device not stationary: gyro standard deviation {std_dev:.4} rad/s exceeds {threshold:.4} rad/s")]
    NotStationary { std_dev: f64, threshold: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("ellipsoid constraint failed: {0}")]
    ConstraintFailure(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("frequency {frequency} Hz aliases at sample rate {sample_rate} Hz")]
    Aliasing { frequency: f64, sample_rate: f64 },

    #[error("target unreachable: residual {residual:.6} m after {iterations} iterations")]
    Unreachable {
        angles: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

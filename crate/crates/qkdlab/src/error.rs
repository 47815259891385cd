use thiserror::Error;

/// Errors raised by state construction, measurement, and harness code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Pauli index {0}, expected 0..=3")]
    InvalidPauli(u8),
    #[error("pattern has {got} entries, expected {expected}")]
    PatternLength { got: usize, expected: usize },
    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown subsystem label {0:?}")]
    UnknownLabel(String),
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("norm violation: {what} has norm² {norm_sq} (tolerance {tolerance})")]
    NormViolation {
        what: &'static str,
        norm_sq: f64,
        tolerance: f64,
    },
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("attack description is empty")]
    EmptyAttack,
    #[error("check plan does not match state: {0}")]
    PlanMismatch(String),
    #[error("outcome has zero probability under the state")]
    ZeroProbabilityOutcome,
    #[error("invalid value for {what}: {why}")]
    InvalidValue { what: &'static str, why: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact version mismatch: row was produced by {row}, this build is {current}")]
    VersionMismatch { row: String, current: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

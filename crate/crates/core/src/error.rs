use thiserror::Error;

/// Errors raised by the fedpower library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is numerically rank deficient: pivot {pivot} has magnitude {magnitude:e} below threshold {threshold:e}")]
    RankDeficient {
        pivot: usize,
        magnitude: f64,
        threshold: f64,
    },

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    ConvergenceFailure { sweeps: usize, residual: f64 },

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error at line {line}, byte offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("feature index {index} at line {line} exceeds declared dimension {dim}")]
    IndexOutOfRange { line: usize, index: usize, dim: usize },

    #[error("cannot split {rows} rows into {shards} non-empty shards")]
    TooManyShards { rows: usize, shards: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RankDeficient { .. } => "RankDeficient",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidBudget(_) => "InvalidBudget",
            Error::DegenerateData(_) => "DegenerateData",
            Error::Parse { .. } => "ParseError",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::TooManyShards { .. } => "TooManyShards",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFinite { .. } => "NonFinite",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Wraps the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn dims(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller supplied an invalid parameter or specification.
    Config,
    /// The input data is malformed or violates a panel invariant.
    Data,
    /// A numerical routine or pipeline step could not complete.
    Execution,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate key: unit `{unit}` period {period}")]
    DuplicateKey { unit: String, period: i64 },

    #[error("unit `{unit}` is assigned to groups `{first}` and `{second}`")]
    GroupInconsistency {
        unit: String,
        first: String,
        second: String,
    },

    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dataset has no group column")]
    NoGroups,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("column `{0}` not found")]
    ColumnNotFound(String),

    #[error("rank-deficient design: column(s) {0:?} are linearly dependent on earlier columns")]
    RankDeficient(Vec<String>),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::DuplicateKey { .. }
            | Error::GroupInconsistency { .. }
            | Error::MissingValue { .. }
            | Error::NoGroups
            | Error::ColumnNotFound(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::InvalidParameter(_) | Error::IndexOutOfRange { .. } => ErrorKind::Config,
            Error::EmptyPartition(_)
            | Error::RankDeficient(_)
            | Error::SingleClass
            | Error::ShapeMismatch { .. }
            | Error::Contract(_) => ErrorKind::Execution,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

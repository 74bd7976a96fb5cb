use thiserror::Error;

/// Errors raised while fitting groups, building test operators, or running the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("group {group}: need more observations than coefficients (n = {n}, p = {p})")]
    InsufficientData { group: String, n: usize, p: usize },

    #[error("group {group}: design matrix is rank deficient (condition ratio {ratio:e})")]
    RankDeficient { group: String, ratio: f64 },

    #[error("group {group}: residual variance {s2:e} is numerically zero")]
    DegenerateFit { group: String, s2: f64 },

    #[error("need at least two groups, got {0}")]
    NeedTwoGroups(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("numerically singular matrix: {0}")]
    NumericallySingular(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientData { .. } => "InsufficientData",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::DegenerateFit { .. } => "DegenerateFit",
            Error::NeedTwoGroups(_) => "NeedTwoGroups",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::NumericallySingular(_) => "NumericallySingular",
            Error::InternalConsistency(_) => "InternalConsistency",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Schema(_) => "SchemaError",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for failures caused by the supplied data or arguments rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData { .. }
                | Error::NeedTwoGroups(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

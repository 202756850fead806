use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a line of an input file was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    MalformedHeader,
    RowLength { expected: usize, found: usize },
    NonNumeric(String),
    NonFinite(String),
    /// The body holds a different number of rows than the header announced.
    CountMismatch { expected: usize, found: usize },
    MalformedRecord(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MalformedHeader => write!(f, "malformed header, expected \"<rows> <dims>\""),
            Self::RowLength { expected, found } => {
                write!(f, "row has {found} components, expected {expected}")
            }
            Self::NonNumeric(tok) => write!(f, "non-numeric component {tok:?}"),
            Self::NonFinite(tok) => write!(f, "non-finite component {tok:?}"),
            Self::CountMismatch { expected, found } => {
                write!(f, "header announces {expected} rows, body has {found}")
            }
            Self::MalformedRecord(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("rank deficient: effective rank {rank} of {dim}")]
    RankDeficient { rank: usize, dim: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::Invalid(_) => 2,
            Error::RankDeficient { .. } | Error::Numerical(_) => 3,
        }
    }
}

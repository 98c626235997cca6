use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("input file contains no transactions")]
    EmptyFile,
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("no account has the required {min_history} months of history")]
    NoQualifyingAccounts { min_history: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input length {len} incompatible with architecture: {reason}")]
    IncompatibleLength { len: usize, reason: String },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("{arch} does not support {what}")]
    UnsupportedArchitecture { arch: String, what: String },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error("non-finite soft assignment")]
    NonFiniteAssignment,
    #[error("cluster {0} has zero total assignment mass")]
    DegenerateColumn(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("metric undefined: all points fall in a single cluster")]
    SingleCluster,
    #[error("clusters {0} and {1} have coincident centroids")]
    CoincidentCentroids(usize, usize),
    #[error("report has no valid rows")]
    NoValidRows,
    #[error("incompatible combination: {0}")]
    IncompatibleCombination(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

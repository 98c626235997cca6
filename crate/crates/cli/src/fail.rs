use std::fmt;

use ledgercluster::Error;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// A command failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MalformedRow { .. }
        | Error::EmptyFile
        | Error::MissingColumn(_)
        | Error::NoQualifyingAccounts { .. }
        | Error::ShapeMismatch { .. }
        | Error::Io(_)
        | Error::Checkpoint(_) => EXIT_INPUT,
        Error::InvalidConfig(_)
        | Error::IncompatibleLength { .. }
        | Error::UnsupportedArchitecture { .. }
        | Error::IncompatibleCombination(_)
        | Error::TooFewPoints { .. } => EXIT_CONFIG,
        Error::NonFiniteGradient
        | Error::NonFiniteLoss { .. }
        | Error::Diverged(_)
        | Error::NonFiniteAssignment
        | Error::DegenerateColumn(_)
        | Error::SingleCluster
        | Error::CoincidentCentroids(..)
        | Error::NoValidRows => EXIT_NUMERIC,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or config value violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {path} at line {line}, field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("f(1) = {0} must be positive for the linearization at (1, beta + delta, 1)")]
    NonPositiveF1(f64),

    #[error("empty mode set: no mode with positive eigenvalue")]
    EmptyModeSet,

    #[error(
        "no admissible Lyapunov weights: chi = {chi} is not below chi_subcrit = {chi_subcrit}"
    )]
    Infeasible { chi: f64, chi_subcrit: f64 },

    #[error("quadratic form gap {index} is not positive ({value:e})")]
    NonPositiveGap { index: usize, value: f64 },

    #[error("non-finite value in field `{field}` at t = {t}")]
    NonFinite { field: &'static str, t: f64 },

    #[error("runs cannot be compared: {0}")]
    MismatchedRuns(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::NonPositiveF1(_)
            | Error::EmptyModeSet
            | Error::Infeasible { .. }
            | Error::MismatchedRuns(_) => 2,
            Error::NonPositiveGap { .. } | Error::NonFinite { .. } => 3,
            Error::Io { .. } => 1,
        }
    }
}

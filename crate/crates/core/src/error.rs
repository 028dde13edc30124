use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by what the CLI maps them to: configuration problems,
/// data problems, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("similarity is undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("model is already privatized")]
    AlreadyPrivatized,

    #[error("sensitivity must be positive, got {0}")]
    ZeroSensitivity(f64),

    #[error("signal is not above chance (mu_c = {0})")]
    SignalBelowChance(f64),

    #[error("noise similarity has zero spread")]
    ZeroNoise,

    #[error("every decoding group is ill-conditioned")]
    AllGroupsIllConditioned,

    #[error("{0}")]
    Infeasible(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("model file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } | Error::Infeasible(_) => ErrorKind::Config,
            Error::UndefinedSimilarity
            | Error::ZeroNoise
            | Error::AllGroupsIllConditioned
            | Error::SignalBelowChance(_)
            | Error::ZeroSensitivity(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

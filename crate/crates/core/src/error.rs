use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("series too short for {what}: need at least {needed}, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular regression: {0}")]
    Singular(String),

    #[error("undefined feature: {0}")]
    UndefinedFeature(&'static str),

    #[error("undefined GC strength: every channel had a zero denominator")]
    UndefinedStrength,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable kind, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::EmptyInput(_) => "empty_input",
            Error::TooShort { .. } => "too_short",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::Singular(_) => "singular",
            Error::UndefinedFeature(_) => "undefined_feature",
            Error::UndefinedStrength => "undefined_strength",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Whether the error stems from user input (exit code 2) rather than a
    /// runtime failure (exit code 1).
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

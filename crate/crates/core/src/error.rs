use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("validation error at {element}: {reason}")]
    Validation { element: String, reason: String },

    #[error("{what} {value} out of range [{min}, {max}]")]
    Range { what: String, value: i64, min: i64, max: i64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no qualifying customers")]
    NoQualifyingCustomers,

    #[error("{axis} {index} has no observed entries")]
    DegenerateAxis { axis: &'static str, index: usize },

    #[error("insufficient customers: need {needed}, have {available}")]
    InsufficientCustomers { needed: usize, available: usize },

    #[error("insufficient series length: need {needed}, have {available}")]
    InsufficientSeries { needed: usize, available: usize },

    #[error("horizon exhausted at t={0}")]
    HorizonExhausted(usize),

    #[error("environment not reset")]
    NotReset,

    #[error("observation layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite TD loss at update {update}")]
    NonFiniteLoss { update: usize },

    #[error("empty horizon")]
    EmptyHorizon,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("missing {what} at {path}; run `generate-data` first")]
    MissingArtifact { what: &'static str, path: PathBuf },

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
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn validation(element: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { element: element.into(), reason: reason.into() }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Range { .. } => "range",
            Error::Dimension(_) => "dimension",
            Error::NoQualifyingCustomers => "no_customers",
            Error::DegenerateAxis { .. } => "degenerate",
            Error::InsufficientCustomers { .. } => "insufficient_customers",
            Error::InsufficientSeries { .. } => "insufficient_series",
            Error::HorizonExhausted(_) => "horizon_exhausted",
            Error::NotReset => "not_reset",
            Error::LayoutMismatch(_) => "layout_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyHorizon => "empty_horizon",
            Error::Argument(_) => "argument",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::data::RowError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("{} invalid row(s); first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    Rows(Vec<RowError>),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("malformed draws file {path}: {reason}")]
    DrawsFormat { path: PathBuf, reason: String },

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("site `{0}` not found in fit")]
    UnknownSite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

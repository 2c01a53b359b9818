use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config key `{key}`: cannot parse value: {msg}")]
    Parse { key: String, msg: String },

    #[error("config key `{key}` out of range: {msg}")]
    Range { key: String, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical blow-up at t = {t} on path {path}: {what}")]
    BlowUp { t: f64, path: u64, what: String },

    #[error("state invariant lost at t = {t} on path {path}: {what}")]
    Invariant { t: f64, path: u64, what: String },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn range(key: &str, msg: impl Into<String>) -> Self {
        Error::Range {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

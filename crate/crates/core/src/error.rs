use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was handed arguments outside its domain (grid mismatch,
    /// point off the grid, malformed grid).
    #[error("domain error: {0}")]
    Domain(String),

    /// The perturbed state has no component along the reference state, so the
    /// `eta * (ref + eps * perp)` form does not exist.
    #[error("overlap with the reference state vanishes")]
    OverlapVanishes,

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// The detector amplitude is exactly zero, so there is no backward state.
    #[error("postselection impossible: detector amplitude is zero")]
    PostselectionImpossible,

    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model dimension {0}: expected one of 3, 4, 10")]
    InvalidDims(usize),

    #[error("level {level} is not part of the {dims}-level model")]
    LevelNotInModel { level: String, dims: usize },

    #[error("invalid control field: {0}")]
    InvalidField(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("optimization aborted: {0}")]
    Diverged(String),

    #[error("config error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

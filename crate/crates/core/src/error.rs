use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit. Each variant maps to one category so the
/// command-line driver can report a stable exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Short category label, used for CLI messages and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Geometry(_) => "geometry",
            Error::Shape(_) => "shape",
            Error::InsufficientDecay(_) => "decay",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) | Error::Json(_) | Error::Wav(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Wav(_) => 3,
            Error::Data(_) | Error::Checkpoint(_) => 4,
            Error::Domain(_) | Error::Geometry(_) | Error::Shape(_) => 5,
            Error::InsufficientDecay(_) => 6,
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("unknown track id {0}")]
    UnknownTrack(u64),

    #[error("duplicate track id {0} in one observation")]
    DuplicateTrack(u64),

    #[error("frame index {got} does not follow previous frame {previous}")]
    NonMonotoneFrame { previous: u64, got: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::InvalidGeometry(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

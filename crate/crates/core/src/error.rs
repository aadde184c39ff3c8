use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejection sampling gave up after {attempts} attempts: {what}")]
    SamplingExhausted { what: &'static str, attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(&'static str),

    #[error("degenerate direction vector (zero length)")]
    DegenerateDirection,

    #[error("checksum mismatch in {}", file.display())]
    Checksum { file: PathBuf },

    #[error("dataset format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("manifest inconsistency: {0}")]
    Manifest(String),

    #[error("regenerated scenario {index} does not match the stored data ({what})")]
    RegenerationMismatch { index: usize, what: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

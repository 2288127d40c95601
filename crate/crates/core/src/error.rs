use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: validation error: {message}")]
    Validation {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: frame_index {frame_index} outside schedule of {frames} frames")]
    FrameOutOfRange {
        path: String,
        line: u64,
        frame_index: u64,
        frames: usize,
    },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid species label {0:?}: expected [a-z0-9_]+")]
    SpeciesLabel(String),

    #[error("frame {got} is not after previously processed frame {last}")]
    Sequencing { last: u64, got: u64 },

    #[error("annotations reference unknown tracks: {0}")]
    UnknownTracks(String),

    #[error("conflicting verdicts between renamed files and annotation store for tracks: {0}")]
    ConflictingVerdicts(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("run directory: {0}")]
    Run(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
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

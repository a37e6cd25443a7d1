use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame dimensions {got_w}x{got_h} do not match expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("need at least {needed} frames for the background window, got {available}")]
    NotEnoughFrames { needed: usize, available: usize },

    #[error("region has no pixels")]
    EmptyRegion,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("vector has {got} entries, tree expects {expected}")]
    Dimensionality { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed model file at line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },

    #[error("unsupported model version {0:?}")]
    ModelVersion(String),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error("assignment too large for exhaustive search ({rows}x{cols})")]
    OracleLimit { rows: usize, cols: usize },

    #[error("frame {0} has no ground truth")]
    MissingTruth(usize),

    #[error("trajectory frame {frame} outside truth range")]
    FrameMisalignment { frame: usize },

    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            reason: reason.into(),
        }
    }
}

//! Learning on top of the driving simulator: a small reverse-mode tape,
//! the convolutional grid encoder, imitation pre-training of the encoder
//! and double-Q training of a maneuver policy.

pub mod drl;
pub mod imitation;
pub mod nets;
pub mod params;
pub mod replay;
pub mod tape;
pub mod toy;

use std::path::Path;

use maneuver_core::checkpoint::CheckpointError;
use maneuver_core::env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("missing dependency: {0} does not exist")]
    Dependency(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl LearnError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

//! Pipeline driver: data ingestion, label statistics, predictor, imitation
//! and Q-learning training, evaluation and episode traces.
//!
//! Every command writes under `output.dir` and records its artifacts in
//! the manifest together with the hash of the resolved configuration.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use commands::{run, Command};
pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("missing dependency: {path} does not exist (produced by `{producer}`)")]
    Dependency { path: PathBuf, producer: &'static str },
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] maneuver_core::data::DataError),
    #[error(transparent)]
    Predictor(#[from] maneuver_core::predictor::PredictorError),
    #[error(transparent)]
    Eval(#[from] maneuver_core::eval::EvalError),
    #[error(transparent)]
    Env(#[from] maneuver_core::env::EnvError),
    #[error(transparent)]
    Learn(#[from] maneuver_learn::LearnError),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for this error. Usage errors (status 2) are
    /// reported by the argument parser before any command runs.
    pub fn exit_code(&self) -> u8 {
        1
    }
}

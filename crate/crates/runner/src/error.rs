use std::path::PathBuf;

use thiserror::Error;
use vocabflip_core::baselines::BaselineError;
use vocabflip_core::DataError;
use vocabflip_tinyformer::ModelError;
use vocabflip_trainkit::TrainError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config line {line}, key `{key}`: {msg}")]
    Config {
        key: String,
        line: usize,
        msg: String,
    },
    #[error("config: {0}")]
    Grid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("result store {0} holds no results")]
    EmptyStore(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl RunnerError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| RunnerError::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| RunnerError::Json { path, source }
    }
}

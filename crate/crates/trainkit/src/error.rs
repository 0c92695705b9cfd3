use thiserror::Error;
use vocabflip_core::DataError;
use vocabflip_tinyformer::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        loss: f64,
    },
    #[error("non-finite gradient in {param}")]
    NonFiniteGradient { param: String },
    #[error("non-finite value in {param} after step {step}")]
    NonFiniteParameter { param: String, step: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("sample {index} has no task label")]
    Unlabelled { index: usize },
    #[error("bad history file: {0}")]
    History(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

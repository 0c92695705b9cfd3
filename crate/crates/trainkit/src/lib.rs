//! Training and evaluation for the tinyformer model.

pub mod adam;
pub mod error;
pub mod history;
pub mod train;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use error::TrainError;
pub use history::{EpochRecord, History};
pub use train::{
    evaluate, pretrain, run_training, run_training_with, teacher_forced_metrics, EpochObserver,
    TrainConfig,
};

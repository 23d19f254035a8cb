//! Vision-transformer forecaster: patch embedding, learned position table,
//! pre-norm encoder stack and a readout token feeding a two-layer head.

pub mod data;
pub mod model;
pub mod train;

pub use data::{Samples, Variant};
pub use model::{patchify, VitConfig, VitForecaster};
pub use data::Renderer;
pub use train::{batch_pass, evaluate_loss, predict_samples, train, EpochRecord, TrainLog, TrainOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VitError {
    #[error("expected a {expected_h}x{expected_w} image, got {got_h}x{got_w}")]
    BadShape {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] specvit_nn::NnError),
    #[error(transparent)]
    Imaging(#[from] specvit_imaging::ImagingError),
    #[error(transparent)]
    Checkpoint(#[from] specvit_nn::checkpoint::CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VitError>;

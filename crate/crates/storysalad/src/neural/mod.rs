//! Sentence-pair scorer with from-scratch gradients: BiLSTM encoder,
//! mutual attention, convolutional mixture context, bilinear output,
//! Adam training, gradient checking, checkpoints, and attention heatmaps.

pub mod attention;
pub mod checkpoint;
pub mod cnn;
pub mod gradcheck;
pub mod heatmap;
pub mod lstm;
pub mod model;
pub mod params;
pub mod tensor;
pub mod text_task;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("context of {len} tokens is shorter than filter width {width}")]
    ContextTooShort { len: usize, width: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("attention is disabled for this model variant")]
    AttentionDisabled,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

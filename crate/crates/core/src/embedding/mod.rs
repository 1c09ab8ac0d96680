//! A small trainable speaker-embedding model: per-frame affine + ReLU,
//! temporal statistics pooling, affine projection, L2 normalization, and an
//! additive angular margin softmax head.

mod checkpoint;
mod config;
mod model;
mod schedule;
mod train;

use thiserror::Error;

use crate::audio_io::WavError;
use crate::augment::AugmentError;
use crate::features::FeatureError;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::ToyModelConfig;
pub use model::{aam_head, aam_loss, forward, tsp_pool, HeadOutput, ToyModel, VARIANCE_FLOOR};
pub use schedule::schedule;
pub use train::{train, Augment, TrainLogRecord, TrainOptions, TrainOutput, TrainSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("pooling needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("label {label} out of range for {n_speakers} speakers")]
    InvalidLabel { label: usize, n_speakers: usize },
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

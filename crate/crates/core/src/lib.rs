//! Silence padding augmentation for speaker verification, with the tooling
//! to measure its effect: evaluation-set builders, log-Mel features, an
//! energy VAD, a small trainable embedding model, and EER/minDCF scoring.

pub mod audio_io;
pub mod augment;
pub mod embedding;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod testset;
pub mod vad;

pub use audio_io::{read_wav, write_wav, Waveform};
pub use augment::{pad_aug_batch, PadAugConfig, PaddingLayout};
pub use embedding::{ToyModel, ToyModelConfig};
pub use features::{FbankConfig, FeatureMatrix};
pub use metrics::{DetMetrics, ScoreRecord, Trial};
pub use rng::Rng;
pub use testset::{TestVariant, TestsetOptions};
pub use vad::{SpeechMask, VadConfig};

//! Energy-based voice activity detection with hang-before/hangover
//! dilation, and silence frame dropping.
//!
//! Frames are non-overlapping. A frame is raw speech when its log energy
//! exceeds a per-utterance noise floor (a low percentile of all frame
//! energies) by `energy_offset_db`. Each raw speech run is then extended
//! `hang_before` frames backward and `hang_over` frames forward.

use thiserror::Error;

use crate::audio_io::Waveform;

const ENERGY_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum VadError {
    #[error("waveform has {len} samples, shorter than one {frame}-sample frame")]
    TooShort { len: usize, frame: usize },
    #[error("mask has {mask} frames, waveform has {frames}")]
    LengthMismatch { mask: usize, frames: usize },
    #[error("no speech frames detected")]
    EmptyResult,
    #[error("invalid VAD config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub energy_offset_db: f64,
    pub hang_before: usize,
    pub hang_over: usize,
    pub floor_percentile: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 10.0,
            energy_offset_db: 9.0,
            hang_before: 10,
            hang_over: 20,
            floor_percentile: 0.1,
        }
    }
}

impl VadConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    fn validate(&self, sample_rate: u32) -> Result<(), VadError> {
        if !(self.floor_percentile > 0.0 && self.floor_percentile < 1.0) {
            return Err(VadError::InvalidConfig("floor_percentile must be in (0, 1)".into()));
        }
        if self.frame_samples(sample_rate) == 0 {
            return Err(VadError::InvalidConfig("frame shorter than one sample".into()));
        }
        Ok(())
    }
}

/// Per-frame speech decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeechMask(pub Vec<bool>);

impl SpeechMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn speech_frames(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// `'0'`/`'1'` per frame.
    pub fn to_bits(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bits(bits: &str) -> Option<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(SpeechMask)
    }
}

/// Log energy (dB) of each full frame.
pub fn frame_energies_db(w: &Waveform, frame: usize) -> Vec<f64> {
    w.samples
        .chunks_exact(frame)
        .map(|c| {
            let ms = c.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>() / frame as f64;
            10.0 * (ms + ENERGY_EPS).log10()
        })
        .collect()
}

/// Extends every `true` run `before` frames backward and `after` forward.
pub fn dilate(raw: &[bool], before: usize, after: usize) -> Vec<bool> {
    let n = raw.len();
    let mut out = vec![false; n];
    for i in raw.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i) {
        let lo = i.saturating_sub(before);
        let hi = (i + after).min(n - 1);
        out[lo..=hi].iter_mut().for_each(|b| *b = true);
    }
    out
}

pub fn detect(w: &Waveform, cfg: &VadConfig) -> Result<SpeechMask, VadError> {
    cfg.validate(w.sample_rate)?;
    let frame = cfg.frame_samples(w.sample_rate);
    let energies = frame_energies_db(w, frame);
    if energies.is_empty() {
        return Err(VadError::TooShort { len: w.len(), frame });
    }
    let mut sorted = energies.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[(cfg.floor_percentile * (sorted.len() - 1) as f64).floor() as usize];
    let threshold = floor + cfg.energy_offset_db;
    let raw: Vec<bool> = energies.iter().map(|&e| e > threshold).collect();
    Ok(SpeechMask(dilate(&raw, cfg.hang_before, cfg.hang_over)))
}

/// Concatenates the samples of speech frames. A trailing partial frame is
/// always dropped, so the output holds exactly `frame * speech_frames`
/// samples.
pub fn drop_silence(w: &Waveform, mask: &SpeechMask, cfg: &VadConfig) -> Result<Waveform, VadError> {
    let frame = cfg.frame_samples(w.sample_rate);
    if frame == 0 {
        return Err(VadError::InvalidConfig("frame shorter than one sample".into()));
    }
    let frames = w.len() / frame;
    if mask.len() != frames {
        return Err(VadError::LengthMismatch {
            mask: mask.len(),
            frames,
        });
    }
    if mask.speech_frames() == 0 {
        return Err(VadError::EmptyResult);
    }
    let samples = w
        .samples
        .chunks_exact(frame)
        .zip(&mask.0)
        .filter(|(_, &keep)| keep)
        .flat_map(|(c, _)| c.iter().copied())
        .collect();
    Ok(Waveform::new(samples, w.sample_rate))
}

/// Runs [`detect`] then [`drop_silence`], returning the input unchanged if
/// nothing is detected as speech.
pub fn apply_vad(w: &Waveform, cfg: &VadConfig) -> Result<Waveform, VadError> {
    let mask = detect(w, cfg)?;
    match drop_silence(w, &mask, cfg) {
        Err(VadError::EmptyResult) => Ok(w.clone()),
        other => other,
    }
}

//! Log-Mel filterbank features.
//!
//! Per frame: pre-emphasis, Hamming window, power spectrum, triangular
//! filters on the HTK mel scale spanning 0 Hz to Nyquist, then
//! `ln(max(energy, log_floor))`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio_io::Waveform;
use crate::rng::Rng;

pub const FEATURE_MAGIC: [u8; 4] = *b"FBNK";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("waveform has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid fbank config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("corrupt feature archive: {0}")]
    CorruptArchive(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    pub log_floor: f64,
    /// Standard deviation of Gaussian dither added before analysis; 0 disables.
    pub dither: f64,
    pub dither_seed: u64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            win_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            log_floor: 1e-10,
            dither: 0.0,
            dither_seed: 0,
        }
    }
}

impl FbankConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n_mels == 0 {
            return Err(FeatureError::InvalidConfig("n_mels must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(FeatureError::InvalidConfig("preemphasis must be in [0, 1)".into()));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(FeatureError::InvalidConfig("log_floor must be positive".into()));
        }
        if !(self.win_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(FeatureError::InvalidConfig("window and hop must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.win_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.window_samples(sample_rate).next_power_of_two()
    }

    /// Frames produced for `len` samples, or `None` if shorter than a window.
    pub fn num_frames(&self, len: usize, sample_rate: u32) -> Option<usize> {
        let win = self.window_samples(sample_rate);
        (len >= win).then(|| 1 + (len - win) / self.hop_samples(sample_rate))
    }
}

/// Row-major `frames x dims` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub dims: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dims: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), frames * dims, "value count does not match shape");
        Self { frames, dims, values }
    }

    pub fn zeros(frames: usize, dims: usize) -> Self {
        Self::new(frames, dims, vec![0.0; frames * dims])
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims.max(1))
    }

    /// Per-dimension mean over time.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dims];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.frames.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Stacks `self` and `other` along time.
    pub fn concat(&self, other: &FeatureMatrix) -> FeatureMatrix {
        assert_eq!(self.dims, other.dims);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        FeatureMatrix::new(self.frames + other.frames, self.dims, values)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

struct MelFilter {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Reusable extractor with the window, filterbank and FFT plan precomputed
/// for one sample rate.
pub struct Fbank {
    cfg: FbankConfig,
    sample_rate: u32,
    win: usize,
    hop: usize,
    fft_size: usize,
    window: Vec<f64>,
    filters: Vec<MelFilter>,
    fft: Arc<dyn Fft<f64>>,
}

impl Fbank {
    pub fn new(cfg: FbankConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let win = cfg.window_samples(sample_rate);
        let hop = cfg.hop_samples(sample_rate);
        if win < 2 || hop == 0 {
            return Err(FeatureError::InvalidConfig("window too short for sample rate".into()));
        }
        let fft_size = cfg.fft_size(sample_rate);
        let window = (0..win)
            .map(|n| 0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (win - 1) as f64).cos())
            .collect();
        let filters = mel_filters(cfg.n_mels, fft_size, sample_rate);
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            cfg,
            sample_rate,
            win,
            hop,
            fft_size,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &FbankConfig {
        &self.cfg
    }

    pub fn compute(&self, w: &Waveform) -> Result<FeatureMatrix, FeatureError> {
        if w.sample_rate != self.sample_rate {
            return Err(FeatureError::InvalidConfig(format!(
                "extractor built for {} Hz, waveform is {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let frames = self
            .cfg
            .num_frames(w.len(), w.sample_rate)
            .ok_or(FeatureError::TooShort {
                len: w.len(),
                needed: self.win,
            })?;

        let mut samples: Vec<f64> = w.samples.iter().map(|&s| f64::from(s)).collect();
        if self.cfg.dither > 0.0 {
            let mut rng = Rng::new(self.cfg.dither_seed);
            samples.iter_mut().for_each(|s| *s += self.cfg.dither * rng.normal());
        }

        let n_bins = self.fft_size / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let mut out = FeatureMatrix::zeros(frames, self.cfg.n_mels);
        let k = self.cfg.preemphasis;

        for t in 0..frames {
            let frame = &samples[t * self.hop..t * self.hop + self.win];
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < self.win {
                    let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                    Complex::new((frame[i] - k * prev) * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (v, filt) in out.row_mut(t).iter_mut().zip(&self.filters) {
                let energy: f64 = filt
                    .weights
                    .iter()
                    .zip(&power[filt.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                *v = energy.max(self.cfg.log_floor).ln();
            }
        }
        Ok(out)
    }
}

/// Mel filter `m` peaks at `mel_to_hz(center_mels[m])`.
pub fn mel_center_frequencies(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(f64::from(sample_rate) / 2.0);
    (1..=n_mels)
        .map(|m| mel_to_hz(top * m as f64 / (n_mels + 1) as f64))
        .collect()
}

fn mel_filters(n_mels: usize, fft_size: usize, sample_rate: u32) -> Vec<MelFilter> {
    let top = hz_to_mel(f64::from(sample_rate) / 2.0);
    let edge = |i: usize| top * i as f64 / (n_mels + 1) as f64;
    let bin_mel: Vec<f64> = (0..=fft_size / 2)
        .map(|b| hz_to_mel(b as f64 * f64::from(sample_rate) / fft_size as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (edge(m), edge(m + 1), edge(m + 2));
            let weight = |mel: f64| {
                if mel > left && mel <= center {
                    (mel - left) / (center - left)
                } else if mel > center && mel < right {
                    (right - mel) / (right - center)
                } else {
                    0.0
                }
            };
            let first_bin = bin_mel.iter().position(|&b| weight(b) > 0.0).unwrap_or(0);
            let last_bin = bin_mel.iter().rposition(|&b| weight(b) > 0.0).unwrap_or(0);
            let weights = if last_bin >= first_bin {
                bin_mel[first_bin..=last_bin].iter().map(|&b| weight(b)).collect()
            } else {
                Vec::new()
            };
            MelFilter { first_bin, weights }
        })
        .collect()
}

pub fn fbank(w: &Waveform, cfg: &FbankConfig) -> Result<FeatureMatrix, FeatureError> {
    Fbank::new(cfg.clone(), w.sample_rate)?.compute(w)
}

/// Subtracts the per-dimension temporal mean.
pub fn cmn(f: &FeatureMatrix) -> FeatureMatrix {
    let means = f.column_means();
    let mut out = f.clone();
    for t in 0..out.frames {
        for (v, m) in out.row_mut(t).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

/// Random contiguous window of `n` frames; inputs shorter than `n` are
/// repeated cyclically from the first frame.
pub fn chunk_frames(f: &FeatureMatrix, n: usize, rng: &mut Rng) -> FeatureMatrix {
    assert!(f.frames >= 1, "chunk_frames needs at least one frame");
    if f.frames >= n {
        let start = rng.randint_usize(0, f.frames - n);
        return FeatureMatrix::new(n, f.dims, f.values[start * f.dims..(start + n) * f.dims].to_vec());
    }
    let mut values = Vec::with_capacity(n * f.dims);
    for t in 0..n {
        values.extend_from_slice(f.row(t % f.frames));
    }
    FeatureMatrix::new(n, f.dims, values)
}

/// Writes matrices back to back into `archive` (magic, frames and dims as
/// little-endian u32, then row-major little-endian f32) and a TSV `index`
/// of `utt_id<TAB>byte offset`.
pub fn write_feature_archive(
    archive: &Path,
    index: &Path,
    entries: &[(String, FeatureMatrix)],
) -> Result<(), FeatureError> {
    let mut out = BufWriter::new(File::create(archive)?);
    let mut idx = BufWriter::new(File::create(index)?);
    let mut offset: u64 = 0;
    for (id, f) in entries {
        writeln!(idx, "{id}\t{offset}")?;
        out.write_all(&FEATURE_MAGIC)?;
        out.write_all(&(f.frames as u32).to_le_bytes())?;
        out.write_all(&(f.dims as u32).to_le_bytes())?;
        for &v in &f.values {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        offset += 12 + 4 * f.values.len() as u64;
    }
    out.flush()?;
    idx.flush()?;
    Ok(())
}

pub fn read_feature_matrix<R: Read>(reader: &mut R) -> Result<FeatureMatrix, FeatureError> {
    let mut header = [0u8; 12];
    reader.read_exact(&mut header)?;
    if header[..4] != FEATURE_MAGIC {
        return Err(FeatureError::CorruptArchive("bad magic".into()));
    }
    let frames = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; frames * dims * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|_| FeatureError::CorruptArchive("truncated matrix".into()))?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok(FeatureMatrix::new(frames, dims, values))
}

pub fn read_feature_archive(
    archive: &Path,
    index: &Path,
) -> Result<Vec<(String, FeatureMatrix)>, FeatureError> {
    let mut reader = BufReader::new(File::open(archive)?);
    let text = std::fs::read_to_string(index)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (id, offset) = line
            .split_once('\t')
            .ok_or_else(|| FeatureError::CorruptArchive(format!("bad index line {line:?}")))?;
        let offset: u64 = offset
            .trim()
            .parse()
            .map_err(|_| FeatureError::CorruptArchive(format!("bad offset {offset:?}")))?;
        reader.seek(SeekFrom::Start(offset))?;
        out.push((id.to_string(), read_feature_matrix(&mut reader)?));
    }
    Ok(out)
}

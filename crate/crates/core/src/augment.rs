//! Waveform-level silence padding augmentation.
//!
//! Each utterance is cut to a random chunk of `t_s` samples and then
//! extended back to `t_max` samples with white Gaussian noise placed at the
//! head, the tail, and (optionally) at a random split point inside the
//! speech:
//!
//! ```text
//! noise[0, l_head) | speech[0, p_mid) | noise[l_head, l_head + l_mid) | speech[p_mid, t_s) | noise[.., l_pad)
//! ```
//!
//! Noise power is set relative to the mean squared value of the chosen
//! chunk, at an integer SNR drawn per utterance.

use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::Waveform;
use crate::rng::{child_seed, Rng};

/// Variance used for padding noise when the reference chunk is digital silence.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("input has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("reference chunk has zero power; noise variance undefined")]
    SilentReference,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("utterance {index}: {source}")]
    Utterance {
        index: usize,
        #[source]
        source: Box<AugmentError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PadAugConfig {
    /// Shortest speech chunk, in samples.
    pub t_min: usize,
    /// Output length, in samples.
    pub t_max: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Insert a padding segment inside the speech (HMT) as well as at the
    /// head and tail (HT).
    pub use_mid: bool,
}

impl PadAugConfig {
    pub const DEFAULT_SNR_MIN_DB: f64 = 15.0;
    pub const DEFAULT_SNR_MAX_DB: f64 = 30.0;

    pub fn from_seconds(t_min_s: f64, t_max_s: f64, sample_rate: u32, use_mid: bool) -> Self {
        let sr = f64::from(sample_rate);
        Self {
            t_min: (t_min_s * sr).round() as usize,
            t_max: (t_max_s * sr).round() as usize,
            snr_min_db: Self::DEFAULT_SNR_MIN_DB,
            snr_max_db: Self::DEFAULT_SNR_MAX_DB,
            use_mid,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.t_min == 0 {
            return Err(AugmentError::InvalidConfig("t_min must be positive".into()));
        }
        if self.t_min > self.t_max {
            return Err(AugmentError::InvalidConfig(format!(
                "t_min {} exceeds t_max {}",
                self.t_min, self.t_max
            )));
        }
        if self.snr_min_db.is_nan() || self.snr_max_db.is_nan() || self.snr_min_db > self.snr_max_db {
            return Err(AugmentError::InvalidConfig(format!(
                "snr range [{}, {}] is empty",
                self.snr_min_db, self.snr_max_db
            )));
        }
        if self.snr_min_db.ceil() > self.snr_max_db.floor() {
            return Err(AugmentError::InvalidConfig(format!(
                "snr range [{}, {}] contains no integer dB value",
                self.snr_min_db, self.snr_max_db
            )));
        }
        Ok(())
    }
}

/// Every random quantity drawn for one utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddingLayout {
    pub t_s: usize,
    pub l_head: usize,
    pub l_mid: usize,
    pub l_tail: usize,
    pub p_mid: usize,
    pub snr_db: f64,
}

impl PaddingLayout {
    pub fn l_pad(&self) -> usize {
        self.l_head + self.l_mid + self.l_tail
    }

    pub fn total_len(&self) -> usize {
        self.t_s + self.l_pad()
    }

    /// Output index ranges holding speech, in order.
    pub fn speech_ranges(&self) -> [std::ops::Range<usize>; 2] {
        let left = self.l_head..self.l_head + self.p_mid;
        let right_start = left.end + self.l_mid;
        [left, right_start..right_start + (self.t_s - self.p_mid)]
    }
}

pub fn sample_layout(cfg: &PadAugConfig, rng: &mut Rng) -> Result<PaddingLayout, AugmentError> {
    cfg.validate()?;
    let t_s = rng.randint_usize(cfg.t_min, cfg.t_max);
    let l_pad = cfg.t_max - t_s;
    let l_head = rng.randint_usize(0, l_pad);
    let (l_mid, l_tail) = if cfg.use_mid {
        let l_mid = rng.randint_usize(0, l_pad - l_head);
        (l_mid, l_pad - l_head - l_mid)
    } else {
        (0, l_pad - l_head)
    };
    let snr_db = rng.randint(cfg.snr_min_db.ceil() as i64, cfg.snr_max_db.floor() as i64) as f64;
    let p_mid = rng.randint_usize(0, t_s);
    Ok(PaddingLayout {
        t_s,
        l_head,
        l_mid,
        l_tail,
        p_mid,
        snr_db,
    })
}

/// Contiguous slice of `t_s` samples at a uniformly drawn offset.
pub fn random_chunk(x: &Waveform, t_s: usize, rng: &mut Rng) -> Result<Waveform, AugmentError> {
    if x.len() < t_s {
        return Err(AugmentError::TooShort {
            len: x.len(),
            needed: t_s,
        });
    }
    let start = rng.randint_usize(0, x.len() - t_s);
    Ok(x.slice(start, start + t_s))
}

/// Repeats `x` end to end until it holds at least `min_len` samples.
pub fn loop_pad(x: &Waveform, min_len: usize) -> Result<Waveform, AugmentError> {
    if x.len() >= min_len {
        return Ok(x.clone());
    }
    if x.is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    let samples = x.samples.iter().copied().cycle().take(min_len).collect();
    Ok(Waveform::new(samples, x.sample_rate))
}

fn noise_std(reference_power: f64, snr_db: f64) -> f64 {
    (reference_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn gaussian(len: usize, std: f64, sample_rate: u32, rng: &mut Rng) -> Waveform {
    let samples = (0..len).map(|_| (std * rng.normal()) as f32).collect();
    Waveform::new(samples, sample_rate)
}

/// White Gaussian noise of `n_len` samples whose power sits `snr_db` below
/// the mean squared value of `x_chunk`.
pub fn wgn_like(
    x_chunk: &Waveform,
    snr_db: f64,
    n_len: usize,
    rng: &mut Rng,
) -> Result<Waveform, AugmentError> {
    if n_len == 0 {
        return Ok(Waveform::empty(x_chunk.sample_rate));
    }
    let power = x_chunk.power();
    if power == 0.0 {
        return Err(AugmentError::SilentReference);
    }
    Ok(gaussian(n_len, noise_std(power, snr_db), x_chunk.sample_rate, rng))
}

/// Like [`wgn_like`] but never fails: silent or empty references fall back
/// to [`NOISE_VARIANCE_FLOOR`].
pub fn wgn_floored(x_chunk: &Waveform, snr_db: f64, n_len: usize, rng: &mut Rng) -> Waveform {
    let var = (x_chunk.power() / 10f64.powf(snr_db / 10.0)).max(NOISE_VARIANCE_FLOOR);
    gaussian(n_len, var.sqrt(), x_chunk.sample_rate, rng)
}

/// Interleaves speech and noise per `layout`.
pub fn assemble(
    x_chunk: &Waveform,
    layout: &PaddingLayout,
    noise: &Waveform,
) -> Result<Waveform, AugmentError> {
    if x_chunk.len() != layout.t_s {
        return Err(AugmentError::LengthMismatch(format!(
            "chunk has {} samples, layout expects {}",
            x_chunk.len(),
            layout.t_s
        )));
    }
    if noise.len() != layout.l_pad() {
        return Err(AugmentError::LengthMismatch(format!(
            "noise has {} samples, layout expects {}",
            noise.len(),
            layout.l_pad()
        )));
    }
    if layout.p_mid > layout.t_s {
        return Err(AugmentError::LengthMismatch(format!(
            "split point {} beyond chunk length {}",
            layout.p_mid, layout.t_s
        )));
    }
    let (head, rest) = noise.samples.split_at(layout.l_head);
    let (mid, tail) = rest.split_at(layout.l_mid);
    let (left, right) = x_chunk.samples.split_at(layout.p_mid);

    let mut out = Vec::with_capacity(layout.total_len());
    for seg in [head, left, mid, right, tail] {
        out.extend_from_slice(seg);
    }
    Ok(Waveform::new(out, x_chunk.sample_rate))
}

/// Augmented waveform together with the layout and chunk that produced it.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub output: Waveform,
    pub layout: PaddingLayout,
    pub chunk: Waveform,
}

/// Applies the full per-utterance pipeline to one waveform.
pub fn pad_aug_one(x: &Waveform, cfg: &PadAugConfig, rng: &mut Rng) -> Result<Augmented, AugmentError> {
    let layout = sample_layout(cfg, rng)?;
    let source = loop_pad(x, layout.t_s)?;
    let chunk = random_chunk(&source, layout.t_s, rng)?;
    let noise = wgn_floored(&chunk, layout.snr_db, layout.l_pad(), rng);
    let output = assemble(&chunk, &layout, &noise)?;
    Ok(Augmented {
        output,
        layout,
        chunk,
    })
}

/// Augments a mini-batch. Utterance `i` draws from a child stream seeded by
/// `(batch seed, i)`, so the result does not depend on scheduling.
pub fn pad_aug_batch(
    batch: &[Waveform],
    cfg: &PadAugConfig,
    rng: &mut Rng,
) -> Result<Vec<Waveform>, AugmentError> {
    cfg.validate()?;
    let batch_seed = rng.next_u64();
    batch
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let mut child = Rng::new(child_seed(batch_seed, index as u64));
            pad_aug_one(x, cfg, &mut child)
                .map(|a| a.output)
                .map_err(|e| AugmentError::Utterance {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| ((i % 200) as f32 - 100.0) / 200.0).collect(), 16_000)
    }

    #[test]
    fn degenerate_range_forces_zero_padding() {
        let cfg = PadAugConfig {
            t_min: 1000,
            t_max: 1000,
            snr_min_db: 20.0,
            snr_max_db: 20.0,
            use_mid: true,
        };
        for seed in 0..50 {
            let l = sample_layout(&cfg, &mut Rng::new(seed)).unwrap();
            assert_eq!((l.t_s, l.l_head, l.l_mid, l.l_tail), (1000, 0, 0, 0));
            assert_eq!(l.snr_db, 20.0);
        }
    }

    #[test]
    fn ht_never_pads_the_middle() {
        let cfg = PadAugConfig::from_seconds(1.0, 3.0, 16_000, false);
        for seed in 0..2000 {
            let l = sample_layout(&cfg, &mut Rng::new(seed)).unwrap();
            assert_eq!(l.l_mid, 0);
            assert_eq!(l.total_len(), cfg.t_max);
        }
    }

    #[test]
    fn invalid_config() {
        let mut cfg = PadAugConfig::from_seconds(3.0, 1.0, 16_000, false);
        assert!(matches!(
            sample_layout(&cfg, &mut Rng::new(0)),
            Err(AugmentError::InvalidConfig(_))
        ));
        cfg = PadAugConfig::from_seconds(1.0, 3.0, 16_000, false);
        cfg.snr_min_db = 10.2;
        cfg.snr_max_db = 10.8;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn chunk_edge_cases() {
        let x = ramp(500);
        let mut rng = Rng::new(9);
        assert_eq!(random_chunk(&x, 500, &mut rng).unwrap(), x);
        assert!(random_chunk(&x, 0, &mut rng).unwrap().is_empty());
        assert!(matches!(
            random_chunk(&x, 501, &mut rng),
            Err(AugmentError::TooShort { len: 500, needed: 501 })
        ));
    }

    #[test]
    fn chunk_is_a_slice_of_the_source() {
        // Distinct sample values make the offset recoverable.
        let x = Waveform::new((0..48_000).map(|i| i as f32 / 48_000.0).collect(), 16_000);
        let mut rng = Rng::new(5);
        for _ in 0..200 {
            let c = random_chunk(&x, 16_000, &mut rng).unwrap();
            let offset = (0..=32_000)
                .find(|&o| x.samples[o] == c.samples[0])
                .expect("offset exists");
            assert_eq!(&x.samples[offset..offset + 16_000], &c.samples[..]);
        }
    }

    #[test]
    fn wgn_edge_cases() {
        let mut rng = Rng::new(1);
        let x = ramp(100);
        assert!(wgn_like(&x, 10.0, 0, &mut rng).unwrap().is_empty());
        let silent = Waveform::new(vec![0.0; 100], 16_000);
        assert!(matches!(
            wgn_like(&silent, 10.0, 5, &mut rng),
            Err(AugmentError::SilentReference)
        ));
        let floored = wgn_floored(&silent, 10.0, 10_000, &mut rng);
        assert!((floored.power() / NOISE_VARIANCE_FLOOR - 1.0).abs() < 0.05);
    }

    #[test]
    fn identity_layout() {
        let x = ramp(300);
        let layout = PaddingLayout {
            t_s: 300,
            l_head: 0,
            l_mid: 0,
            l_tail: 0,
            p_mid: 120,
            snr_db: 20.0,
        };
        assert_eq!(assemble(&x, &layout, &Waveform::empty(16_000)).unwrap(), x);
    }

    #[test]
    fn head_only_layout() {
        let x = ramp(300);
        let noise = Waveform::new(vec![9.0; 50], 16_000);
        let layout = PaddingLayout {
            t_s: 300,
            l_head: 50,
            l_mid: 0,
            l_tail: 0,
            p_mid: 300,
            snr_db: 20.0,
        };
        let out = assemble(&x, &layout, &noise).unwrap();
        assert_eq!(&out.samples[..50], &noise.samples[..]);
        assert_eq!(&out.samples[50..], &x.samples[..]);
    }

    #[test]
    fn assemble_checks_lengths() {
        let layout = PaddingLayout {
            t_s: 10,
            l_head: 2,
            l_mid: 0,
            l_tail: 0,
            p_mid: 0,
            snr_db: 0.0,
        };
        assert!(assemble(&ramp(9), &layout, &ramp(2)).is_err());
        assert!(assemble(&ramp(10), &layout, &ramp(3)).is_err());
    }

    #[test]
    fn loop_pad_repeats() {
        let x = Waveform::new(vec![1.0, 2.0, 3.0], 16_000);
        assert_eq!(loop_pad(&x, 7).unwrap().samples, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(loop_pad(&Waveform::empty(16_000), 4), Err(AugmentError::EmptyInput)));
    }

    #[test]
    fn batch_errors_carry_index() {
        let cfg = PadAugConfig::from_seconds(0.01, 0.02, 16_000, false);
        let batch = vec![ramp(400), Waveform::empty(16_000)];
        match pad_aug_batch(&batch, &cfg, &mut Rng::new(0)) {
            Err(AugmentError::Utterance { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(pad_aug_batch(&[], &cfg, &mut Rng::new(0)).unwrap().is_empty());
    }
}

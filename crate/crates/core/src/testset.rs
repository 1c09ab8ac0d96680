//! Evaluation-set construction: fixed 3 s chunks, fixed head/tail/mid
//! paddings, and the silence-to-speech ratio sweep.
//!
//! Every utterance draws from its own stream seeded by `(seed, utt_id)`, and
//! the chunk offset is always drawn first. Building `Chunk3s` and any padded
//! variant from the same seed therefore pads exactly the same chunks.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::{read_wav, write_wav, WavError, Waveform};
use crate::augment::{assemble, loop_pad, random_chunk, wgn_floored, AugmentError, PaddingLayout};
use crate::manifest::{write_manifest, ManifestError, UtteranceRecord};
use crate::rng::{seed_for_id, Rng};

pub const CHUNK_SECONDS: u32 = 3;
pub const MAX_RATIO_SECONDS: u32 = 8;
pub const DEFAULT_TEST_SNR_DB: f64 = 25.0;

#[derive(Debug, Error)]
pub enum TestsetError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("ratio numerator {0} outside [0, {MAX_RATIO_SECONDS}]")]
    InvalidRatio(u32),
    #[error("utterance {utt_id}: {source}")]
    Wav {
        utt_id: String,
        #[source]
        source: WavError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// `k / 2` seconds at the head, the rest at the tail.
    HeadTailEven,
    /// Random head/tail split of the `k` seconds.
    PerLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestVariant {
    Original,
    Chunk3s,
    Chunk3sHeadTail,
    Chunk3sHeadTailMid,
    RatioSweep { k_seconds: u32, placement: Placement },
}

impl TestVariant {
    pub fn name(&self) -> String {
        match self {
            TestVariant::Original => "original".into(),
            TestVariant::Chunk3s => "chunk3s".into(),
            TestVariant::Chunk3sHeadTail => "chunk3s+head1s+tail1s".into(),
            TestVariant::Chunk3sHeadTailMid => "chunk3s+head1s+tail1s+mid1s".into(),
            TestVariant::RatioSweep { k_seconds, .. } => format!("ratio{k_seconds}/3"),
        }
    }
}

/// What the padding is made of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Silence {
    /// White Gaussian noise `snr_db` below the chunk's power.
    Noise { snr_db: f64 },
    /// Digital zeros.
    Zeros,
}

impl Default for Silence {
    fn default() -> Self {
        Silence::Noise {
            snr_db: DEFAULT_TEST_SNR_DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TestsetOptions {
    pub silence: Silence,
    /// Take the 3 s chunk from the start of the utterance instead of a
    /// random offset.
    pub from_start: bool,
}

fn chunk_len(sample_rate: u32) -> usize {
    (CHUNK_SECONDS * sample_rate) as usize
}

pub fn build_chunk3s(w: &Waveform, rng: &mut Rng, from_start: bool) -> Result<Waveform, TestsetError> {
    if w.is_empty() {
        return Err(TestsetError::EmptyInput);
    }
    let len = chunk_len(w.sample_rate);
    let source = loop_pad(w, len)?;
    if from_start {
        return Ok(source.slice(0, len));
    }
    Ok(random_chunk(&source, len, rng)?)
}

fn check_chunk(w3s: &Waveform) -> Result<(), TestsetError> {
    let expected = chunk_len(w3s.sample_rate);
    if w3s.len() != expected {
        return Err(TestsetError::LengthMismatch {
            expected,
            found: w3s.len(),
        });
    }
    Ok(())
}

fn padding(chunk: &Waveform, len: usize, silence: Silence, rng: &mut Rng) -> Waveform {
    match silence {
        Silence::Noise { snr_db } => wgn_floored(chunk, snr_db, len, rng),
        Silence::Zeros => Waveform::new(vec![0.0; len], chunk.sample_rate),
    }
}

fn pad_with(
    chunk: &Waveform,
    l_head: usize,
    l_mid: usize,
    l_tail: usize,
    silence: Silence,
    rng: &mut Rng,
) -> Result<Waveform, TestsetError> {
    let t_s = chunk.len();
    let p_mid = if l_mid > 0 && t_s > 1 { rng.randint_usize(1, t_s - 1) } else { t_s };
    let layout = PaddingLayout {
        t_s,
        l_head,
        l_mid,
        l_tail,
        p_mid,
        snr_db: match silence {
            Silence::Noise { snr_db } => snr_db,
            Silence::Zeros => f64::INFINITY,
        },
    };
    let noise = padding(chunk, layout.l_pad(), silence, rng);
    Ok(assemble(chunk, &layout, &noise)?)
}

/// Pads a 3 s chunk with fixed amounts of silence. The mid segment, if
/// any, goes at a uniformly drawn point strictly inside the speech.
pub fn pad_fixed(
    w3s: &Waveform,
    head_s: f64,
    tail_s: f64,
    mid_s: f64,
    silence: Silence,
    rng: &mut Rng,
) -> Result<Waveform, TestsetError> {
    check_chunk(w3s)?;
    pad_with(
        w3s,
        w3s.samples_for(head_s),
        w3s.samples_for(mid_s),
        w3s.samples_for(tail_s),
        silence,
        rng,
    )
}

/// Pads a 3 s chunk with `k_seconds` of silence (ratio `k/3`).
pub fn build_ratio(
    w3s: &Waveform,
    k_seconds: u32,
    placement: Placement,
    silence: Silence,
    rng: &mut Rng,
) -> Result<Waveform, TestsetError> {
    if k_seconds > MAX_RATIO_SECONDS {
        return Err(TestsetError::InvalidRatio(k_seconds));
    }
    check_chunk(w3s)?;
    let sr = w3s.sample_rate as usize;
    let l_pad = k_seconds as usize * sr;
    let l_head = match placement {
        Placement::HeadTailEven => (k_seconds / 2) as usize * sr,
        Placement::PerLayout => rng.randint_usize(0, l_pad),
    };
    pad_with(w3s, l_head, 0, l_pad - l_head, silence, rng)
}

/// Builds one test-variant waveform from a source utterance.
pub fn apply_variant(
    w: &Waveform,
    variant: TestVariant,
    opts: &TestsetOptions,
    rng: &mut Rng,
) -> Result<Waveform, TestsetError> {
    if variant == TestVariant::Original {
        return Ok(w.clone());
    }
    let chunk = build_chunk3s(w, rng, opts.from_start)?;
    match variant {
        TestVariant::Original | TestVariant::Chunk3s => Ok(chunk),
        TestVariant::Chunk3sHeadTail => pad_fixed(&chunk, 1.0, 1.0, 0.0, opts.silence, rng),
        TestVariant::Chunk3sHeadTailMid => pad_fixed(&chunk, 1.0, 1.0, 1.0, opts.silence, rng),
        TestVariant::RatioSweep { k_seconds, placement } => {
            build_ratio(&chunk, k_seconds, placement, opts.silence, rng)
        }
    }
}

/// Variant of one utterance, seeded by `(seed, utt_id)`.
pub fn variant_for_utterance(
    utt_id: &str,
    w: &Waveform,
    variant: TestVariant,
    opts: &TestsetOptions,
    seed: u64,
) -> Result<Waveform, TestsetError> {
    let mut rng = Rng::new(seed_for_id(seed, utt_id));
    apply_variant(w, variant, opts, &mut rng)
}

/// Writes one WAV per record under `out_dir/wav/` and a `manifest.tsv`
/// describing them; returns the new records in input order.
pub fn build_testset(
    manifest: &[UtteranceRecord],
    variant: TestVariant,
    out_dir: &Path,
    seed: u64,
    opts: &TestsetOptions,
) -> Result<Vec<UtteranceRecord>, TestsetError> {
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|source| TestsetError::Io {
        path: wav_dir.clone(),
        source,
    })?;
    let records = manifest
        .par_iter()
        .map(|rec| {
            let out_path = wav_dir.join(format!("{}.wav", rec.utt_id));
            let wav_err = |source| TestsetError::Wav {
                utt_id: rec.utt_id.clone(),
                source,
            };
            let num_samples = if variant == TestVariant::Original {
                fs::copy(&rec.path, &out_path).map_err(|source| TestsetError::Io {
                    path: rec.path.clone(),
                    source,
                })?;
                rec.num_samples
            } else {
                let w = read_wav(&rec.path).map_err(wav_err)?;
                let out = variant_for_utterance(&rec.utt_id, &w, variant, opts, seed)?;
                write_wav(&out_path, &out).map_err(wav_err)?;
                out.len()
            };
            Ok(UtteranceRecord {
                utt_id: rec.utt_id.clone(),
                speaker_id: rec.speaker_id.clone(),
                path: out_path,
                num_samples,
                sample_rate: rec.sample_rate,
            })
        })
        .collect::<Result<Vec<_>, TestsetError>>()?;
    write_manifest(out_dir.join("manifest.tsv"), &records)?;
    log::debug!("{}: wrote {} utterances to {}", variant.name(), records.len(), out_dir.display());
    Ok(records)
}

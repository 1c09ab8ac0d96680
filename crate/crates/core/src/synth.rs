//! Deterministic synthetic multi-speaker corpus.
//!
//! Each speaker is a source-filter voice: an impulse train at a jittered
//! fundamental drives three cascaded two-pole resonators at the speaker's
//! formants. Utterances are chains of syllable-like bursts separated by
//! short pauses. Per-utterance session effects (pitch and formant shifts,
//! a first-order spectral tilt, background noise level) keep same-speaker
//! utterances from being identical.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::{write_wav, WavError, Waveform};
use crate::manifest::{write_manifest, ManifestError, UtteranceRecord};
use crate::metrics::{format_trials, Trial};
use crate::rng::{child_seed, Rng};

const PEAK: f32 = 0.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 2 speakers, got {0}")]
    TooFewSpeakers(usize),
    #[error("duration must be positive")]
    InvalidDuration,
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpeakerProfile {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub formants: [Formant; 3],
    /// Relative standard deviation of per-syllable loudness.
    pub amplitude_jitter: f64,
    /// Relative standard deviation of per-syllable pitch.
    pub f0_jitter: f64,
}

pub fn make_speaker(seed: u64) -> SynthSpeakerProfile {
    let mut rng = Rng::new(child_seed(seed, 0x5EED));
    let mut formant = |lo: f64, hi: f64, bw_lo: f64, bw_hi: f64| Formant {
        freq_hz: rng.uniform_range(lo, hi),
        bandwidth_hz: rng.uniform_range(bw_lo, bw_hi),
    };
    let formants = [
        formant(300.0, 900.0, 60.0, 120.0),
        formant(900.0, 2400.0, 80.0, 180.0),
        formant(2400.0, 3600.0, 120.0, 250.0),
    ];
    SynthSpeakerProfile {
        speaker_id: format!("spk{seed:04}"),
        f0_hz: rng.uniform_range(80.0, 300.0),
        formants,
        amplitude_jitter: rng.uniform_range(0.05, 0.2),
        f0_jitter: rng.uniform_range(0.01, 0.05),
    }
}

/// Klatt-style two-pole resonator.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tune(&mut self, freq: f64, bandwidth: f64, sample_rate: f64) {
        let t = 1.0 / sample_rate;
        self.c = -(-std::f64::consts::TAU * bandwidth * t).exp();
        self.b = 2.0 * (-std::f64::consts::PI * bandwidth * t).exp() * (std::f64::consts::TAU * freq * t).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders `duration_s` seconds of speech-like audio, peak-normalized to 0.5.
pub fn synth_utterance(
    p: &SynthSpeakerProfile,
    duration_s: f64,
    sample_rate: u32,
    rng: &mut Rng,
) -> Result<Waveform, SynthError> {
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(SynthError::InvalidDuration);
    }
    let sr = f64::from(sample_rate);
    let nyquist = sr / 2.0;
    let n = (duration_s * sr).round() as usize;

    // Session effects shared by the whole utterance.
    let session_f0 = 1.0 + 0.04 * rng.normal();
    let session_formant: Vec<f64> = (0..3).map(|_| 1.0 + 0.03 * rng.normal()).collect();
    let tilt = rng.uniform_range(-0.5, 0.5);
    let noise_level = 10f64.powf(rng.uniform_range(-4.0, -3.0));

    let mut out = vec![0.0f64; n];
    let mut resonators = [Resonator::new(), Resonator::new(), Resonator::new()];
    let mut phase = 0.0;
    let mut t = (rng.uniform_range(0.0, 0.08) * sr) as usize;
    while t < n {
        let syl_len = (rng.uniform_range(0.12, 0.30) * sr) as usize;
        let gap = (rng.uniform_range(0.03, 0.10) * sr) as usize;
        let gain = (1.0 + p.amplitude_jitter * rng.normal()).max(0.2);
        let f0_start = p.f0_hz * session_f0 * (1.0 + p.f0_jitter * rng.normal());
        let f0_end = f0_start * (1.0 + p.f0_jitter * rng.normal());
        for (k, r) in resonators.iter_mut().enumerate() {
            let vowel = rng.uniform_range(0.92, 1.08);
            let freq = (p.formants[k].freq_hz * session_formant[k] * vowel).min(nyquist * 0.95);
            r.tune(freq, p.formants[k].bandwidth_hz, sr);
        }
        let ramp = (0.02 * sr) as usize;
        let end = (t + syl_len).min(n);
        for (i, sample) in out.iter_mut().enumerate().take(end).skip(t) {
            let pos = (i - t) as f64 / syl_len.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * pos;
            phase += f0 / sr;
            let mut x = 0.0;
            if phase >= 1.0 {
                phase -= 1.0;
                x = 1.0;
            }
            let mut y = x;
            for r in resonators.iter_mut() {
                y = r.step(y);
            }
            let from_start = i - t;
            let to_end = syl_len - from_start;
            let edge = (from_start.min(to_end) as f64 / ramp as f64).min(1.0);
            let env = 0.5 - 0.5 * (std::f64::consts::PI * edge).cos();
            *sample = gain * env * y;
        }
        t = end + gap;
    }

    // First-order tilt, then background noise relative to the signal peak.
    let mut prev = 0.0;
    for v in out.iter_mut() {
        let x = *v;
        *v = x - tilt * prev;
        prev = x;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in out.iter_mut() {
        *v = *v / peak + noise_level * rng.normal();
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let samples = out.iter().map(|v| (v / peak * f64::from(PEAK)) as f32).collect();
    Ok(Waveform::new(samples, sample_rate))
}

/// All same-speaker pairs as targets plus as many distinct random
/// cross-speaker pairs as non-targets (fewer only if not enough exist).
pub fn make_trials(records: &[UtteranceRecord], rng: &mut Rng) -> Vec<Trial> {
    let mut trials = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if records[i].speaker_id == records[j].speaker_id {
                trials.push(Trial {
                    enroll_id: records[i].utt_id.clone(),
                    test_id: records[j].utt_id.clone(),
                    is_target: true,
                });
            }
        }
    }
    let wanted = trials.len();
    let mut cross: Vec<(usize, usize)> = Vec::new();
    let n = records.len();
    let total_cross = {
        let mut per_speaker = std::collections::HashMap::new();
        records.iter().for_each(|r| *per_speaker.entry(&r.speaker_id).or_insert(0usize) += 1);
        let same: usize = per_speaker.values().map(|c| c * (c - 1) / 2).sum();
        n * n.saturating_sub(1) / 2 - same
    };
    if wanted * 2 >= total_cross {
        for i in 0..n {
            for j in i + 1..n {
                if records[i].speaker_id != records[j].speaker_id {
                    cross.push((i, j));
                }
            }
        }
        rng.shuffle(&mut cross);
        cross.truncate(wanted);
    } else {
        let mut seen = HashSet::new();
        while cross.len() < wanted {
            let i = rng.randint_usize(0, n - 1);
            let j = rng.randint_usize(0, n - 1);
            if records[i].speaker_id == records[j].speaker_id {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                cross.push((i, j));
            }
        }
    }
    trials.extend(cross.into_iter().map(|(i, j)| Trial {
        enroll_id: records[i].utt_id.clone(),
        test_id: records[j].utt_id.clone(),
        is_target: false,
    }));
    trials
}

/// In-memory corpus: utterances with speaker ids, no files.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub utt_ids: Vec<String>,
    pub speaker_ids: Vec<String>,
    pub waves: Vec<Waveform>,
}

pub fn utt_id(speaker: usize, utt: usize) -> String {
    format!("spk{speaker:04}-utt{utt:04}")
}

/// Generates `n_speakers x n_utts` utterances. Speaker `s` uses profile
/// `make_speaker(child_seed(seed, s))`; utterance `u` of that speaker draws
/// from its own child stream.
pub fn synth_corpus(
    n_speakers: usize,
    n_utts: usize,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Corpus, SynthError> {
    if n_speakers < 2 {
        return Err(SynthError::TooFewSpeakers(n_speakers));
    }
    let profiles: Vec<SynthSpeakerProfile> = (0..n_speakers)
        .map(|s| {
            let mut p = make_speaker(child_seed(seed, s as u64));
            p.speaker_id = format!("spk{s:04}");
            p
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..n_speakers).flat_map(|s| (0..n_utts).map(move |u| (s, u))).collect();
    let waves = jobs
        .par_iter()
        .map(|&(s, u)| {
            let mut rng = Rng::new(child_seed(child_seed(seed, s as u64), 1 + u as u64));
            synth_utterance(&profiles[s], duration_s, sample_rate, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus {
        utt_ids: jobs.iter().map(|&(s, u)| utt_id(s, u)).collect(),
        speaker_ids: jobs.iter().map(|&(s, _)| profiles[s].speaker_id.clone()).collect(),
        waves,
    })
}

/// Output of [`build_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub records: Vec<UtteranceRecord>,
    pub trials: Vec<Trial>,
    pub manifest_path: PathBuf,
    pub trials_path: PathBuf,
}

/// Writes `out_dir/wav/*.wav`, `out_dir/manifest.tsv` and `out_dir/trials.txt`.
pub fn build_corpus(
    n_speakers: usize,
    n_utts: usize,
    duration_s: f64,
    out_dir: &Path,
    seed: u64,
) -> Result<CorpusFiles, SynthError> {
    let corpus = synth_corpus(n_speakers, n_utts, duration_s, crate::audio_io::DEFAULT_SAMPLE_RATE, seed)?;
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|source| SynthError::Io {
        path: wav_dir.clone(),
        source,
    })?;
    let records = (0..corpus.waves.len())
        .into_par_iter()
        .map(|i| {
            let path = wav_dir.join(format!("{}.wav", corpus.utt_ids[i]));
            write_wav(&path, &corpus.waves[i])?;
            Ok(UtteranceRecord {
                utt_id: corpus.utt_ids[i].clone(),
                speaker_id: corpus.speaker_ids[i].clone(),
                path,
                num_samples: corpus.waves[i].len(),
                sample_rate: corpus.waves[i].sample_rate,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let trials = make_trials(&records, &mut Rng::new(child_seed(seed, u64::MAX)));
    let manifest_path = out_dir.join("manifest.tsv");
    write_manifest(&manifest_path, &records)?;
    let trials_path = out_dir.join("trials.txt");
    fs::write(&trials_path, format_trials(&trials)).map_err(|source| SynthError::Io {
        path: trials_path.clone(),
        source,
    })?;
    Ok(CorpusFiles {
        records,
        trials,
        manifest_path,
        trials_path,
    })
}

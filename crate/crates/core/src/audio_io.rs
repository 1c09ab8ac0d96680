//! 16-bit mono PCM WAV reading and writing.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

const PCM_SCALE: f32 = 32768.0;
const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn empty(sample_rate: u32) -> Self {
        Self::new(Vec::new(), sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Number of samples spanning `seconds` at this waveform's rate.
    pub fn samples_for(&self, seconds: f64) -> usize {
        (seconds * f64::from(self.sample_rate)).round() as usize
    }

    /// Mean squared sample value; 0 for an empty waveform.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        Waveform::new(self.samples[start..end].to_vec(), self.sample_rate)
    }
}

pub fn mean_square(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / samples.len() as f64
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, WavError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => WavError::NotFound(path.to_path_buf()),
        _ => WavError::Io(e),
    })?;
    read_wav_from(BufReader::new(file))
}

pub fn read_wav_from<R: Read>(mut reader: R) -> Result<Waveform, WavError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::CorruptHeader("missing RIFF/WAVE signature".into()));
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            if size < 16 || body + size > bytes.len() {
                return Err(WavError::CorruptHeader("truncated fmt chunk".into()));
            }
            let mut format = u16_at(bytes, body);
            let channels = u16_at(bytes, body + 2);
            let rate = u32_at(bytes, body + 4);
            let bits = u16_at(bytes, body + 14);
            if format == FORMAT_EXTENSIBLE {
                if size < 40 {
                    return Err(WavError::CorruptHeader("truncated extensible fmt".into()));
                }
                // First two bytes of the sub-format GUID carry the codec tag.
                format = u16_at(bytes, body + 24);
            }
            fmt = Some((format, channels, rate, bits));
        } else if id == b"data" {
            let (format, channels, rate, bits) =
                fmt.ok_or_else(|| WavError::CorruptHeader("data chunk before fmt".into()))?;
            if format != FORMAT_PCM {
                return Err(WavError::UnsupportedFormat(format!("codec tag {format}")));
            }
            if channels != 1 {
                return Err(WavError::UnsupportedFormat(format!("{channels} channels")));
            }
            if bits != 16 {
                return Err(WavError::UnsupportedFormat(format!("{bits}-bit samples")));
            }
            if rate == 0 {
                return Err(WavError::CorruptHeader("zero sample rate".into()));
            }
            if !size.is_multiple_of(2) || body + size > bytes.len() {
                return Err(WavError::CorruptHeader("truncated data chunk".into()));
            }
            let samples = bytes[body..body + size]
                .chunks_exact(2)
                .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])) / PCM_SCALE)
                .collect();
            return Ok(Waveform::new(samples, rate));
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1);
    }
    Err(WavError::CorruptHeader(
        if fmt.is_none() { "missing fmt chunk" } else { "missing data chunk" }.into(),
    ))
}

/// Quantizes one sample to 16-bit PCM, clamping to `[-1, 1]` first.
pub fn quantize(sample: f32) -> i16 {
    let s = if sample.is_nan() { 0.0 } else { sample.clamp(-1.0, 1.0) };
    (s * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<(), WavError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_wav_to(&mut writer, wave)?;
    writer.flush()?;
    Ok(())
}

pub fn write_wav_to<W: Write>(mut writer: W, wave: &Waveform) -> Result<(), WavError> {
    let data_len = u32::try_from(wave.len() * 2)
        .map_err(|_| WavError::UnsupportedFormat("waveform too long for RIFF".into()))?;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &wave.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    writer.write_all(&out)?;
    Ok(())
}

//! Utterance manifests: tab-separated `utt_id speaker_id wav_path num_samples sample_rate`,
//! one record per line, no header.
//!
//! Relative wav paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("field contains a tab or newline: {0:?}")]
    InvalidField(String),
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub path: PathBuf,
    pub num_samples: usize,
    pub sample_rate: u32,
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| ManifestError::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let path = PathBuf::from(fields[2]);
        let record = UtteranceRecord {
            utt_id: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            path: if path.is_relative() { base_dir.join(path) } else { path },
            num_samples: fields[3]
                .parse()
                .map_err(|_| err(format!("bad num_samples {:?}", fields[3])))?,
            sample_rate: fields[4]
                .parse()
                .map_err(|_| err(format!("bad sample_rate {:?}", fields[4])))?,
        };
        if !seen.insert(record.utt_id.clone()) {
            return Err(ManifestError::DuplicateId(record.utt_id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

fn check_field(s: &str) -> Result<&str, ManifestError> {
    if s.contains(['\t', '\n', '\r']) {
        Err(ManifestError::InvalidField(s.to_string()))
    } else {
        Ok(s)
    }
}

/// Serializes records, writing paths under `base_dir` relative to it.
pub fn format_manifest(records: &[UtteranceRecord], base_dir: &Path) -> Result<String, ManifestError> {
    let mut out = String::new();
    for r in records {
        let path = r.path.strip_prefix(base_dir).unwrap_or(&r.path);
        let path = path.to_string_lossy();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            check_field(&r.utt_id)?,
            check_field(&r.speaker_id)?,
            check_field(&path)?,
            r.num_samples,
            r.sample_rate
        ));
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let text = format_manifest(records, path.parent().unwrap_or(Path::new(".")))?;
    fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, path: &str) -> UtteranceRecord {
        UtteranceRecord {
            utt_id: id.into(),
            speaker_id: "spk".into(),
            path: PathBuf::from(path),
            num_samples: 48_000,
            sample_rate: 16_000,
        }
    }

    #[test]
    fn roundtrip_relative_paths() {
        let base = Path::new("/data/set");
        let records = vec![rec("a", "/data/set/wav/a.wav"), rec("b", "/elsewhere/b.wav")];
        let text = format_manifest(&records, base).unwrap();
        assert!(text.starts_with("a\tspk\twav/a.wav\t48000\t16000\n"));
        assert_eq!(parse_manifest(&text, base).unwrap(), records);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(matches!(parse_manifest("a\tb\tc\n", base), Err(ManifestError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_manifest("a\ts\tp\tx\t16000\n", base),
            Err(ManifestError::Parse { .. })
        ));
        assert!(matches!(
            parse_manifest("a\ts\tp\t1\t16000\na\ts\tq\t1\t16000\n", base),
            Err(ManifestError::DuplicateId(_))
        ));
        assert!(matches!(
            format_manifest(&[rec("bad\tid", "x.wav")], base),
            Err(ManifestError::InvalidField(_))
        ));
    }
}

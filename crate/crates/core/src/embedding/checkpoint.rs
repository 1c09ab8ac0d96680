//! Binary checkpoints: magic, version, then `input_dim hidden_dim embed_dim
//! n_speakers` as little-endian u32, followed by the parameter blocks
//! (w1, b1, w2, b2, head) as little-endian f64.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{ModelError, ToyModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PADM";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, model: &ToyModel) -> Result<(), ModelError> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    for v in [VERSION, model.input_dim as u32, model.hidden_dim as u32, model.embed_dim as u32, model.n_speakers as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for (_, group) in model.groups() {
        for v in group {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ToyModel, ModelError> {
    let corrupt = |msg: &str| ModelError::CorruptCheckpoint(msg.to_string());
    let mut header = [0u8; 24];
    r.read_exact(&mut header).map_err(|_| corrupt("truncated header"))?;
    if header[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if field(0) != VERSION as usize {
        return Err(corrupt("unsupported version"));
    }
    let mut model = ToyModel::zeros(field(1), field(2), field(3), field(4));
    let mut buf = [0u8; 8];
    for (_, group) in model.groups_mut() {
        for v in group.iter_mut() {
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated parameters"))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(model)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `path` and a `path.meta` text sidecar holding `metadata`.
pub fn save_checkpoint(path: &Path, model: &ToyModel, metadata: &str) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    fs::write(path, buf)?;
    fs::write(sidecar(path), metadata)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ToyModel, ModelError> {
    read_checkpoint(fs::read(path)?.as_slice())
}

//! `key=value` config files.
//!
//! Keys are long flag names of the chosen subcommand (without `--`). The
//! file's entries are spliced into argv right after the subcommand, so any
//! flag given on the command line comes later and wins.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {raw:?}", i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Turns entries into flags. `true`/`false` values map to a bare switch or
/// nothing.
pub fn to_args(entries: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => args.push(format!("--{key}={value}")),
        }
    }
    args
}

/// Value of a `--config` flag, in either `--config PATH` or `--config=PATH`
/// form.
pub fn find_config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Index of the subcommand token: the first argument that is neither a
/// global flag nor the value of `--config`.
pub fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if a == "--config" {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Returns argv with the config file's flags inserted after the subcommand.
pub fn expand_argv(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = find_config_path(&argv) else {
        return Ok(argv);
    };
    let Some(pos) = subcommand_index(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    let extra = to_args(&parse(&text)?);
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

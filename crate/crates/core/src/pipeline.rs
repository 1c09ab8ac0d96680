//! Embedding extraction and evaluation over test-set variants.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::Waveform;
use crate::embedding::{forward, ModelError, ToyModel};
use crate::features::{cmn, Fbank, FbankConfig, FeatureError};
use crate::metrics::{det_metrics, score_trials, DcfParams, DetMetrics, MetricsError, Trial};
use crate::testset::{variant_for_utterance, Placement, TestVariant, TestsetError, TestsetOptions, MAX_RATIO_SECONDS};
use crate::vad::{apply_vad, VadConfig, VadError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Testset(#[from] TestsetError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Waveform to embedding: optional VAD frame dropping, fbank over the
/// whole utterance, utterance-level CMN, model forward.
pub struct Embedder {
    model: ToyModel,
    fbank: Fbank,
    vad: Option<VadConfig>,
}

impl Embedder {
    pub fn new(model: ToyModel, fbank: FbankConfig, sample_rate: u32, vad: Option<VadConfig>) -> Result<Self, PipelineError> {
        Ok(Self {
            model,
            fbank: Fbank::new(fbank, sample_rate)?,
            vad,
        })
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn embed(&self, w: &Waveform) -> Result<Vec<f64>, PipelineError> {
        let speech;
        let input = match &self.vad {
            Some(cfg) => {
                speech = apply_vad(w, cfg)?;
                &speech
            }
            None => w,
        };
        let feats = cmn(&self.fbank.compute(input)?);
        Ok(forward(&self.model, &feats)?)
    }

    pub fn embed_all(&self, ids: &[String], waves: &[Waveform]) -> Result<HashMap<String, Vec<f64>>, PipelineError> {
        ids.par_iter()
            .zip(waves.par_iter())
            .map(|(id, w)| Ok((id.clone(), self.embed(w)?)))
            .collect()
    }
}

/// Test utterances plus the trial list over them.
pub struct EvalSet<'a> {
    pub utt_ids: &'a [String],
    pub waves: &'a [Waveform],
    pub trials: &'a [Trial],
}

/// Builds `variant` from every utterance (seeded per utterance id), embeds
/// and scores.
pub fn evaluate_variant(
    embedder: &Embedder,
    set: &EvalSet<'_>,
    variant: TestVariant,
    opts: &TestsetOptions,
    seed: u64,
    dcf: &DcfParams,
) -> Result<DetMetrics, PipelineError> {
    let waves = set
        .utt_ids
        .par_iter()
        .zip(set.waves.par_iter())
        .map(|(id, w)| variant_for_utterance(id, w, variant, opts, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let store = embedder.embed_all(set.utt_ids, &waves)?;
    let scores = score_trials(set.trials, &store)?;
    Ok(det_metrics(&scores, dcf)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub system: String,
    pub k_seconds: u32,
    pub metrics: DetMetrics,
}

/// Evaluates every system at silence-to-speech ratios `0/3 ..= 8/3`.
pub fn ratio_sweep(
    systems: &[(String, &Embedder)],
    set: &EvalSet<'_>,
    placement: Placement,
    opts: &TestsetOptions,
    seed: u64,
    dcf: &DcfParams,
) -> Result<Vec<SweepRow>, PipelineError> {
    let mut rows = Vec::new();
    for (name, embedder) in systems {
        for k in 0..=MAX_RATIO_SECONDS {
            let variant = TestVariant::RatioSweep { k_seconds: k, placement };
            let metrics = evaluate_variant(embedder, set, variant, opts, seed, dcf)?;
            rows.push(SweepRow {
                system: name.clone(),
                k_seconds: k,
                metrics,
            });
        }
    }
    Ok(rows)
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut out = String::from("system\tratio\tk_seconds\teer\tmin_dcf\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}/3\t{}\t{:.6}\t{:.6}",
            r.system, r.k_seconds, r.k_seconds, r.metrics.eer, r.metrics.min_dcf
        );
    }
    out
}

/// `utt_id v1 v2 ...`, one embedding per line, sorted by id.
pub fn format_embeddings(store: &HashMap<String, Vec<f64>>) -> String {
    let mut ids: Vec<&String> = store.keys().collect();
    ids.sort();
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        for v in &store[id] {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings(text: &str) -> Result<HashMap<String, Vec<f64>>, PipelineError> {
    let mut store = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        store.insert(id, values);
    }
    Ok(store)
}

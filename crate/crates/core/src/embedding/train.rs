use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{aam_loss, schedule, ModelError, ToyModel, ToyModelConfig};
use crate::audio_io::{read_wav, Waveform};
use crate::augment::{pad_aug_batch, PadAugConfig};
use crate::features::{chunk_frames, cmn, Fbank, FbankConfig, FeatureMatrix};
use crate::manifest::UtteranceRecord;
use crate::rng::{child_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    None,
    PadAugHt,
    PadAugHmt,
}

impl std::str::FromStr for Augment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Augment::None),
            "ht" | "padaug-ht" => Ok(Augment::PadAugHt),
            "hmt" | "padaug-hmt" => Ok(Augment::PadAugHmt),
            other => Err(format!("unknown augmentation {other:?} (expected none, ht or hmt)")),
        }
    }
}

impl std::fmt::Display for Augment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Augment::None => "none",
            Augment::PadAugHt => "ht",
            Augment::PadAugHmt => "hmt",
        })
    }
}

/// Labelled training waveforms.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub waves: Vec<Waveform>,
    pub labels: Vec<usize>,
    /// Speaker id for each label, sorted.
    pub speakers: Vec<String>,
}

impl TrainSet {
    pub fn new(waves: Vec<Waveform>, speaker_ids: &[String]) -> Self {
        assert_eq!(waves.len(), speaker_ids.len());
        let speakers: Vec<String> = speaker_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let labels = speaker_ids
            .iter()
            .map(|s| speakers.binary_search(s).expect("speaker present"))
            .collect();
        Self {
            waves,
            labels,
            speakers,
        }
    }

    pub fn from_records(records: &[UtteranceRecord]) -> Result<Self, ModelError> {
        let waves = records
            .par_iter()
            .map(|r| read_wav(&r.path))
            .collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<String> = records.iter().map(|r| r.speaker_id.clone()).collect();
        Ok(Self::new(waves, &ids))
    }

    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub augment: Augment,
    /// Used when `augment` is not `None`; `use_mid` is overridden by the mode.
    pub padaug: PadAugConfig,
    pub fbank: FbankConfig,
}

impl TrainOptions {
    /// 1 s to 3 s speech chunks padded to 3 s at 16 kHz.
    pub fn new(augment: Augment) -> Self {
        Self {
            augment,
            padaug: PadAugConfig::from_seconds(1.0, 3.0, 16_000, augment == Augment::PadAugHmt),
            fbank: FbankConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ToyModel,
    pub log: Vec<TrainLogRecord>,
    pub speakers: Vec<String>,
}

/// Mini-batch SGD without momentum.
///
/// Each step draws one seed from the run's stream; every example in the
/// batch derives its own child stream from it, so the per-example work can
/// run in parallel while gradients are summed in batch order.
pub fn train(cfg: &ToyModelConfig, data: &TrainSet, opts: &TrainOptions) -> Result<TrainOutput, ModelError> {
    cfg.validate()?;
    if data.speakers.len() < 2 {
        return Err(ModelError::DatasetTooSmall(format!(
            "need at least 2 speakers, found {}",
            data.speakers.len()
        )));
    }
    if cfg.n_speakers != data.speakers.len() {
        return Err(ModelError::InvalidConfig(format!(
            "config has {} speakers, data has {}",
            cfg.n_speakers,
            data.speakers.len()
        )));
    }
    let sample_rate = data.waves[0].sample_rate;
    let extractor = Fbank::new(opts.fbank.clone(), sample_rate)?;
    if cfg.input_dim != opts.fbank.n_mels {
        return Err(ModelError::DimMismatch {
            expected: cfg.input_dim,
            found: opts.fbank.n_mels,
        });
    }
    let mut padaug = opts.padaug.clone();
    padaug.use_mid = opts.augment == Augment::PadAugHmt;

    // Without augmentation the waveform never changes, so its features are
    // computed once and only the segment position varies.
    let full_features: Vec<FeatureMatrix> = if opts.augment == Augment::None {
        data.waves
            .par_iter()
            .map(|w| extractor.compute(w))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let mut rng = Rng::new(cfg.seed);
    let mut model = ToyModel::init(cfg, &mut rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let step_seed = rng.next_u64();

        let augmented = if opts.augment == Augment::None {
            None
        } else {
            let waves: Vec<Waveform> = batch.iter().map(|&i| data.waves[i].clone()).collect();
            Some(pad_aug_batch(&waves, &padaug, &mut Rng::new(step_seed))?)
        };

        let (margin, lr) = schedule(step, cfg);
        let results = batch
            .par_iter()
            .enumerate()
            .map(|(j, &idx)| {
                let mut child = Rng::new(child_seed(step_seed, j as u64));
                let feats = match &augmented {
                    Some(waves) => extractor.compute(&waves[j])?,
                    None => full_features[idx].clone(),
                };
                let segment = cmn(&chunk_frames(&feats, cfg.segment_frames, &mut child));
                aam_loss(&model, &segment, data.labels[idx], margin, cfg.scale)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;

        let mut grad = model.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            grad.axpy(1.0, g);
        }
        let n = results.len() as f64;
        model.axpy(-lr / n, &grad);
        if step % 100 == 0 || step + 1 == cfg.total_steps {
            log::debug!("step {step}: loss {:.4} lr {lr:.3e} margin {margin:.3}", loss / n);
        }
        log.push(TrainLogRecord {
            step,
            loss: loss / n,
            lr,
            margin,
        });
    }

    Ok(TrainOutput {
        model,
        log,
        speakers: data.speakers.clone(),
    })
}

//! Cosine trial scoring, EER and minDCF.
//!
//! A trial is accepted when `score >= threshold`; ties are accepted.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least one target and one non-target trial (got {targets} / {nontargets})")]
    DegenerateTrialSet { targets: usize, nontargets: usize },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no embedding for {0}")]
    MissingEmbedding(String),
    #[error("non-finite score")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no score for trial {0} {1}")]
    MissingScore(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub trial: Trial,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMetrics {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
    /// Divide by `min(c_miss * p_target, c_fa * (1 - p_target))`.
    pub normalize: bool,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
            normalize: true,
        }
    }
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn score_trials(
    trials: &[Trial],
    store: &HashMap<String, Vec<f64>>,
) -> Result<Vec<ScoreRecord>, MetricsError> {
    let lookup = |id: &str| {
        store
            .get(id)
            .ok_or_else(|| MetricsError::MissingEmbedding(id.to_string()))
    };
    trials
        .iter()
        .map(|t| {
            let score = cosine_score(lookup(&t.enroll_id)?, lookup(&t.test_id)?)?;
            Ok(ScoreRecord {
                trial: t.clone(),
                score,
            })
        })
        .collect()
}

/// Operating points, one per distinct observed score plus accept-nothing.
struct DetCurve {
    /// Ascending thresholds; the last entry is `+inf`.
    thresholds: Vec<f64>,
    /// Targets rejected (score < threshold).
    misses: Vec<usize>,
    /// Non-targets accepted (score >= threshold).
    false_alarms: Vec<usize>,
    n_target: usize,
    n_nontarget: usize,
}

impl DetCurve {
    fn new(scores: &[ScoreRecord]) -> Result<Self, MetricsError> {
        if scores.iter().any(|s| !s.score.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let n_target = scores.iter().filter(|s| s.trial.is_target).count();
        let n_nontarget = scores.len() - n_target;
        if n_target == 0 || n_nontarget == 0 {
            return Err(MetricsError::DegenerateTrialSet {
                targets: n_target,
                nontargets: n_nontarget,
            });
        }
        let mut sorted: Vec<(f64, bool)> = scores.iter().map(|s| (s.score, s.trial.is_target)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut thresholds = Vec::new();
        let mut misses = Vec::new();
        let mut false_alarms = Vec::new();
        let (mut below_t, mut below_n) = (0, 0);
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].0;
            thresholds.push(t);
            misses.push(below_t);
            false_alarms.push(n_nontarget - below_n);
            while i < sorted.len() && sorted[i].0 == t {
                if sorted[i].1 {
                    below_t += 1;
                } else {
                    below_n += 1;
                }
                i += 1;
            }
        }
        thresholds.push(f64::INFINITY);
        misses.push(n_target);
        false_alarms.push(0);
        Ok(Self {
            thresholds,
            misses,
            false_alarms,
            n_target,
            n_nontarget,
        })
    }

    fn frr(&self, i: usize) -> f64 {
        self.misses[i] as f64 / self.n_target as f64
    }

    fn far(&self, i: usize) -> f64 {
        self.false_alarms[i] as f64 / self.n_nontarget as f64
    }
}

/// Equal error rate by linear interpolation between the two adjacent
/// operating points where `FRR - FAR` changes sign.
pub fn eer(scores: &[ScoreRecord]) -> Result<(f64, f64), MetricsError> {
    let curve = DetCurve::new(scores)?;
    // The first point accepts everything (FRR 0, FAR 1) and the last
    // rejects everything (FRR 1, FAR 0), so a crossing always exists.
    let i = (1..curve.thresholds.len())
        .find(|&i| curve.frr(i) >= curve.far(i))
        .expect("DET curve ends with FRR = 1, FAR = 0");
    let d_prev = curve.frr(i - 1) - curve.far(i - 1);
    let d_cur = curve.frr(i) - curve.far(i);
    let alpha = d_prev / (d_prev - d_cur);
    let eer = curve.frr(i - 1) + alpha * (curve.frr(i) - curve.frr(i - 1));
    let (t0, t1) = (curve.thresholds[i - 1], curve.thresholds[i]);
    let threshold = if t1.is_finite() { t0 + alpha * (t1 - t0) } else { t0 };
    Ok((eer, threshold))
}

/// Minimum detection cost over all observed thresholds and `+-inf`.
pub fn min_dcf(scores: &[ScoreRecord], params: &DcfParams) -> Result<(f64, f64), MetricsError> {
    let curve = DetCurve::new(scores)?;
    let norm = if params.normalize {
        (params.c_miss * params.p_target).min(params.c_fa * (1.0 - params.p_target))
    } else {
        1.0
    };
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..curve.thresholds.len() {
        let dcf = (params.c_miss * params.p_target * curve.frr(i)
            + params.c_fa * (1.0 - params.p_target) * curve.far(i))
            / norm;
        if dcf < best.0 {
            best = (dcf, curve.thresholds[i]);
        }
    }
    Ok(best)
}

pub fn det_metrics(scores: &[ScoreRecord], params: &DcfParams) -> Result<DetMetrics, MetricsError> {
    let (eer, eer_threshold) = eer(scores)?;
    let (min_dcf, dcf_threshold) = min_dcf(scores, params)?;
    Ok(DetMetrics {
        eer,
        eer_threshold,
        min_dcf,
        dcf_threshold,
    })
}

/// Parses `label enroll_id test_id` lines (label 1 = target).
pub fn parse_trials(text: &str) -> Result<Vec<Trial>, MetricsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |msg: &str| MetricsError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut it = line.split_whitespace();
            let (Some(label), Some(enroll), Some(test), None) = (it.next(), it.next(), it.next(), it.next())
            else {
                return Err(err("expected `label enroll_id test_id`"));
            };
            let is_target = match label {
                "1" => true,
                "0" => false,
                _ => return Err(err("label must be 0 or 1")),
            };
            Ok(Trial {
                enroll_id: enroll.to_string(),
                test_id: test.to_string(),
                is_target,
            })
        })
        .collect()
}

pub fn format_trials(trials: &[Trial]) -> String {
    trials
        .iter()
        .map(|t| format!("{} {} {}\n", u8::from(t.is_target), t.enroll_id, t.test_id))
        .collect()
}

/// `enroll_id test_id score` with six decimals.
pub fn format_scores(scores: &[ScoreRecord]) -> String {
    scores
        .iter()
        .map(|s| format!("{} {} {:.6}\n", s.trial.enroll_id, s.trial.test_id, s.score))
        .collect()
}

/// Attaches scores from a score file to the labels of a trial list.
pub fn join_scores(trials: &[Trial], score_text: &str) -> Result<Vec<ScoreRecord>, MetricsError> {
    let mut by_pair = HashMap::new();
    for (i, line) in score_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |msg: &str| MetricsError::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err("expected `enroll_id test_id score`"));
        }
        let score: f64 = fields[2].parse().map_err(|_| err("bad score"))?;
        by_pair.insert((fields[0].to_string(), fields[1].to_string()), score);
    }
    trials
        .iter()
        .map(|t| {
            by_pair
                .get(&(t.enroll_id.clone(), t.test_id.clone()))
                .map(|&score| ScoreRecord {
                    trial: t.clone(),
                    score,
                })
                .ok_or_else(|| MetricsError::MissingScore(t.enroll_id.clone(), t.test_id.clone()))
        })
        .collect()
}

pub const REPORT_HEADER: &str = "testset\teer\tmin_dcf\teer_threshold\tdcf_threshold";

pub fn format_report_row(testset: &str, m: &DetMetrics) -> String {
    format!(
        "{testset}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
        m.eer, m.min_dcf, m.eer_threshold, m.dcf_threshold
    )
}

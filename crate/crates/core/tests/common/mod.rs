#![allow(dead_code)]

use padaug_core::metrics::{ScoreRecord, Trial};
use padaug_core::{Rng, Waveform};

pub const SR: u32 = 16_000;

/// Harmonic-rich voiced signal with a slow amplitude envelope.
pub fn voiced(n: usize, rng: &mut Rng) -> Waveform {
    let f0 = rng.uniform_range(90.0, 250.0);
    let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(SR);
            let env = 0.6 + 0.4 * (std::f64::consts::TAU * 3.0 * t + phase).sin();
            let s: f64 = (1..=6)
                .map(|h| (std::f64::consts::TAU * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            (0.25 * env * s) as f32
        })
        .collect();
    Waveform::new(samples, SR)
}

pub fn mean_square(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>() / x.len() as f64
}

/// Maximal runs of `true`.
pub fn runs(flags: &[bool]) -> usize {
    let mut count = 0;
    let mut prev = false;
    for &f in flags {
        if f && !prev {
            count += 1;
        }
        prev = f;
    }
    count
}

pub fn records(targets: &[f64], nontargets: &[f64]) -> Vec<ScoreRecord> {
    let rec = |s: f64, t: bool| ScoreRecord {
        trial: Trial {
            enroll_id: String::new(),
            test_id: String::new(),
            is_target: t,
        },
        score: s,
    };
    targets
        .iter()
        .map(|&s| rec(s, true))
        .chain(nontargets.iter().map(|&s| rec(s, false)))
        .collect()
}

fn rates(scores: &[ScoreRecord], t: f64) -> (f64, f64) {
    let nt = scores.iter().filter(|r| r.trial.is_target).count() as f64;
    let nn = scores.len() as f64 - nt;
    let miss = scores.iter().filter(|r| r.trial.is_target && r.score < t).count() as f64;
    let fa = scores.iter().filter(|r| !r.trial.is_target && r.score >= t).count() as f64;
    (miss / nt, fa / nn)
}

/// Operating points at every observed score (ascending) and at +inf,
/// each counted from scratch.
fn operating_points(scores: &[ScoreRecord]) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = scores.iter().map(|r| r.score).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    ts.iter().map(|&t| rates(scores, t)).collect()
}

/// Brute-force EER: first adjacent pair of operating points where
/// FRR - FAR changes sign, linearly interpolated.
pub fn brute_eer(scores: &[ScoreRecord]) -> f64 {
    let pts = operating_points(scores);
    for w in pts.windows(2) {
        let (m0, f0) = w[0];
        let (m1, f1) = w[1];
        let d0 = m0 - f0;
        let d1 = m1 - f1;
        if d0 == 0.0 {
            return m0;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let a = d0 / (d0 - d1);
            return m0 + a * (m1 - m0);
        }
    }
    unreachable!("FRR - FAR ends at 1")
}

/// Brute-force normalized minDCF over observed thresholds and +-inf.
pub fn brute_min_dcf(scores: &[ScoreRecord], p_target: f64) -> f64 {
    let mut ts: Vec<f64> = scores.iter().map(|r| r.score).collect();
    ts.push(f64::NEG_INFINITY);
    ts.push(f64::INFINITY);
    let norm = p_target.min(1.0 - p_target);
    ts.iter()
        .map(|&t| {
            let (miss, fa) = rates(scores, t);
            (p_target * miss + (1.0 - p_target) * fa) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random score set of size 2..=200 with at least one of each class and
/// deliberate ties.
pub fn random_score_set(rng: &mut Rng) -> Vec<ScoreRecord> {
    let n = rng.randint_usize(2, 200);
    let n_target = rng.randint_usize(1, n - 1);
    let shift = rng.uniform_range(-1.0, 3.0);
    let quantize = rng.uniform() < 0.3;
    let draw = |rng: &mut Rng, mu: f64| {
        let v = mu + rng.normal();
        if quantize {
            (v * 4.0).round() / 4.0
        } else {
            v
        }
    };
    let targets: Vec<f64> = (0..n_target).map(|_| draw(rng, shift)).collect();
    let nontargets: Vec<f64> = (0..n - n_target).map(|_| draw(rng, 0.0)).collect();
    records(&targets, &nontargets)
}

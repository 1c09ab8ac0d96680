mod common;

use common::SR;
use padaug_core::augment::pad_aug_one;
use padaug_core::embedding::{load_checkpoint, save_checkpoint, train, Augment, ToyModelConfig, TrainOptions, TrainSet};
use padaug_core::manifest::read_manifest;
use padaug_core::synth::{build_corpus, make_speaker, synth_corpus, synth_utterance};
use padaug_core::testset::build_testset;
use padaug_core::vad::detect;
use padaug_core::{read_wav, FbankConfig, PadAugConfig, Rng, TestVariant, TestsetOptions, VadConfig};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

#[test]
fn testset_outputs_do_not_depend_on_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    let files = build_corpus(3, 3, 4.0, &dir.path().join("corpus"), 5).unwrap();
    let mut shuffled = files.records.clone();
    Rng::new(1).shuffle(&mut shuffled);
    shuffled.reverse();
    let variant = TestVariant::Chunk3sHeadTailMid;
    let opts = TestsetOptions::default();
    let a = build_testset(&files.records, variant, &dir.path().join("a"), 42, &opts).unwrap();
    let b = build_testset(&shuffled, variant, &dir.path().join("b"), 42, &opts).unwrap();
    for rec in &a {
        let other = b.iter().find(|r| r.utt_id == rec.utt_id).unwrap();
        let wa = read_wav(&rec.path).unwrap();
        assert_eq!(wa.len(), 96_000);
        assert_eq!(wa, read_wav(&other.path).unwrap());
    }
    let listed = read_manifest(dir.path().join("a/manifest.tsv")).unwrap();
    assert_eq!(listed, a);
}

#[test]
fn vad_keeps_speech_of_padded_utterances() {
    let vad = VadConfig::default();
    let frame = vad.frame_samples(SR);
    let mut cfg = PadAugConfig::from_seconds(1.0, 3.0, SR, true);
    cfg.snr_min_db = 20.0;
    for seed in 0..20 {
        let profile = make_speaker(seed);
        let mut rng = Rng::new(seed);
        let x = synth_utterance(&profile, 3.0, SR, &mut rng).unwrap();
        let a = pad_aug_one(&x, &cfg, &mut rng).unwrap();
        let mask = detect(&a.output, &vad).unwrap();
        let (mut speech, mut kept) = (0, 0);
        for range in a.layout.speech_ranges() {
            // Frames lying wholly inside the speech range.
            for f in range.start.div_ceil(frame)..range.end / frame {
                speech += 1;
                kept += usize::from(mask.0[f]);
            }
        }
        assert!(kept as f64 >= 0.95 * speech as f64, "seed {seed}: kept {kept} of {speech}");
    }
}

fn long_term_spectrum(x: &[f32], n: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n / 2 + 1];
    for block in x.chunks_exact(n) {
        let mut buf: Vec<Complex<f64>> = block
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
                Complex::new(f64::from(v) * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, c)| *a += c.norm_sqr());
    }
    acc
}

#[test]
fn synthetic_spectrum_peaks_near_a_formant() {
    for seed in 0..10 {
        let p = make_speaker(seed);
        let x = synth_utterance(&p, 4.0, SR, &mut Rng::new(seed)).unwrap();
        let n = 1024;
        let power = long_term_spectrum(&x.samples, n);
        // Smooth over ~200 Hz so harmonics of the source merge.
        let half = 6;
        let smooth: Vec<f64> = (0..power.len())
            .map(|k| power[k.saturating_sub(half)..(k + half + 1).min(power.len())].iter().sum())
            .collect();
        let lo = 200 * n / SR as usize;
        let peak = (lo..smooth.len()).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap();
        let hz = peak as f64 * f64::from(SR) / n as f64;
        let nearest = p.formants.iter().map(|f| (f.freq_hz - hz).abs() / f.freq_hz).fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.25, "seed {seed}: peak at {hz} Hz, formants {:?}", p.formants);
    }
}

#[test]
fn corpus_is_deterministic_and_speakers_are_separable() {
    let a = synth_corpus(4, 4, 2.0, SR, 9).unwrap();
    let b = synth_corpus(4, 4, 2.0, SR, 9).unwrap();
    assert_eq!(a.waves, b.waves);
    assert_ne!(a.waves, synth_corpus(4, 4, 2.0, SR, 10).unwrap().waves);
    assert!(a.waves.iter().all(|w| w.len() == 32_000));
    let peak = a.waves.iter().flat_map(|w| &w.samples).fold(0f32, |m, v| m.max(v.abs()));
    assert!((peak - 0.5).abs() < 1e-3);

    // Mean log-mel vectors: same-speaker pairs sit closer than cross-speaker pairs.
    let means: Vec<Vec<f64>> = a
        .waves
        .iter()
        .map(|w| padaug_core::features::fbank(w, &FbankConfig::default()).unwrap().column_means())
        .collect();
    let dist = |i: usize, j: usize| means[i].iter().zip(&means[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            if a.speaker_ids[i] == a.speaker_ids[j] {
                intra += dist(i, j);
                ni += 1;
            } else {
                inter += dist(i, j);
                nx += 1;
            }
        }
    }
    let (intra, inter) = (intra / ni as f64, inter / nx as f64);
    assert!(intra < 0.5 * inter, "intra {intra} inter {inter}");
}

fn tiny_training_set() -> TrainSet {
    let c = synth_corpus(4, 6, 2.0, SR, 3).unwrap();
    TrainSet::new(c.waves, &c.speaker_ids)
}

fn tiny_config(seed: u64) -> ToyModelConfig {
    let mut cfg = ToyModelConfig::new(4, 40, seed);
    cfg.batch_size = 8;
    cfg.hidden_dim = 16;
    cfg.embed_dim = 8;
    cfg
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let data = tiny_training_set();
    let cfg = tiny_config(12);
    let base = train(&cfg, &data, &TrainOptions::new(Augment::None)).unwrap();
    let again = train(&cfg, &data, &TrainOptions::new(Augment::None)).unwrap();
    assert_eq!(base.log, again.log);
    assert_eq!(base.model, again.model);
    let mean = |xs: &[padaug_core::embedding::TrainLogRecord]| xs.iter().map(|r| r.loss).sum::<f64>() / xs.len() as f64;
    assert!(mean(&base.log[30..]) < mean(&base.log[..10]), "{:?}", base.log);

    let ht = train(&cfg, &data, &TrainOptions::new(Augment::PadAugHt)).unwrap();
    let hmt = train(&cfg, &data, &TrainOptions::new(Augment::PadAugHmt)).unwrap();
    assert_ne!(ht.log, base.log);
    assert_ne!(ht.log, hmt.log);
    assert!(ht.model.is_finite() && hmt.model.is_finite());
    let threads = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let ht_threads = threads.install(|| train(&cfg, &data, &TrainOptions::new(Augment::PadAugHt)).unwrap());
    assert_eq!(ht.model, ht_threads.model);
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let data = tiny_training_set();
    let cfg = tiny_config(4);
    let out = train(&cfg, &data, &TrainOptions::new(Augment::PadAugHmt)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_checkpoint(&path, &out.model, &cfg.to_kv()).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), out.model);
}

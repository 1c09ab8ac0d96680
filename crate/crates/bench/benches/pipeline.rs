use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use padaug_bench::utterance;
use padaug_core::augment::{pad_aug_batch, PadAugConfig};
use padaug_core::embedding::{aam_loss, ToyModel, ToyModelConfig};
use padaug_core::features::{cmn, fbank, Fbank, FbankConfig};
use padaug_core::metrics::{det_metrics, DcfParams, ScoreRecord, Trial};
use padaug_core::Rng;

fn bench_padaug(c: &mut Criterion) {
    let batch: Vec<_> = (0..32).map(|i| utterance(4.0, i)).collect();
    let mut group = c.benchmark_group("pad_aug_batch");
    for use_mid in [false, true] {
        let cfg = PadAugConfig::from_seconds(1.0, 3.0, 16_000, use_mid);
        let name = if use_mid { "hmt" } else { "ht" };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            let mut rng = Rng::new(0);
            b.iter(|| pad_aug_batch(black_box(&batch), cfg, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn bench_fbank(c: &mut Criterion) {
    let w = utterance(3.0, 1);
    let extractor = Fbank::new(FbankConfig::default(), 16_000).unwrap();
    c.bench_function("fbank_3s_cached_plan", |b| b.iter(|| extractor.compute(black_box(&w)).unwrap()));
    c.bench_function("fbank_3s_fresh_plan", |b| b.iter(|| fbank(black_box(&w), &FbankConfig::default()).unwrap()));
}

fn bench_loss(c: &mut Criterion) {
    let cfg = ToyModelConfig::new(20, 100, 0);
    let model = ToyModel::init(&cfg, &mut Rng::new(0));
    let feats = cmn(&fbank(&utterance(3.0, 2), &FbankConfig::default()).unwrap());
    c.bench_function("aam_loss_298_frames", |b| {
        b.iter(|| aam_loss(&model, black_box(&feats), 3, 0.2, 32.0).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let scores: Vec<ScoreRecord> = (0..20_000)
        .map(|i| {
            let is_target = i % 2 == 0;
            ScoreRecord {
                trial: Trial {
                    enroll_id: format!("e{i}"),
                    test_id: format!("t{i}"),
                    is_target,
                },
                score: rng.normal() + if is_target { 1.5 } else { 0.0 },
            }
        })
        .collect();
    c.bench_function("det_metrics_20k", |b| {
        b.iter(|| det_metrics(black_box(&scores), &DcfParams::default()).unwrap())
    });
}

criterion_group!(benches, bench_padaug, bench_fbank, bench_loss, bench_metrics);
criterion_main!(benches);

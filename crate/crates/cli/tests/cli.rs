use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use padaug_core::manifest::read_manifest;
use padaug_core::read_wav;

fn padaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padaug"))
        .args(args)
        .env("PADAUG_THREADS", "2")
        .output()
        .expect("spawn padaug")
}

fn ok(args: &[&str]) -> String {
    let out = padaug(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path) {
    ok(&["synth", "--out-dir", p(dir), "--speakers", "3", "--utts", "4", "--duration", "3.5", "--seed", "5"]);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(padaug(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(padaug(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = padaug(&["synth", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn pipeline_errors_exit_with_one() {
    let out = padaug(&["eval", "--trials", "/nonexistent/t.txt", "--scores", "/nonexistent/s.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_reports_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let trials = dir.path().join("t.txt");
    let scores = dir.path().join("s.txt");
    fs::write(&trials, "1 a b\n1 c d\n0 a d\n0 c b\n").unwrap();
    fs::write(&scores, "a b 0.8\nc d 0.4\na d 0.6\nc b 0.2\n").unwrap();
    let report = ok(&["eval", "--trials", p(&trials), "--scores", p(&scores), "--name", "toy"]);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "testset\teer\tmin_dcf\teer_threshold\tdcf_threshold");
    let fields: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(fields[0], "toy");
    assert_eq!(fields[1], "0.500000");
    assert_eq!(fields[2], "0.500000");
}

#[test]
fn augment_outputs_are_exactly_t_max_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("corpus");
    corpus(&c);
    let manifest = c.join("manifest.tsv");
    for out in ["a", "b"] {
        ok(&[
            "augment", "--manifest", p(&manifest), "--out-dir", p(&dir.path().join(out)),
            "--mode", "ht", "--t-min", "1.0", "--t-max", "3.0", "--seed", "7",
        ]);
    }
    let a = read_manifest(dir.path().join("a/manifest.tsv")).unwrap();
    let b = read_manifest(dir.path().join("b/manifest.tsv")).unwrap();
    assert_eq!(a.len(), 12);
    for (ra, rb) in a.iter().zip(&b) {
        let wa = read_wav(&ra.path).unwrap();
        assert_eq!(wa.len(), 48_000);
        assert_eq!(wa.duration_s(), 3.0);
        assert_eq!(wa, read_wav(&rb.path).unwrap());
    }
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny corpus\nseed = 3\nspeakers = 2\nutts = 5\nduration = 1.0\n").unwrap();
    let out = dir.path().join("c");
    ok(&["synth", "--config", p(&cfg), "--out-dir", p(&out), "--utts", "2"]);
    let records = read_manifest(out.join("manifest.tsv")).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.num_samples == 16_000));
}

#[test]
fn vad_featurize_and_testset_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("corpus");
    corpus(&c);
    let manifest = c.join("manifest.tsv");

    let masks = dir.path().join("masks.txt");
    ok(&["vad", "--manifest", p(&manifest), "--out", p(&masks)]);
    let text = fs::read_to_string(&masks).unwrap();
    assert_eq!(text.lines().count(), 12);
    for line in text.lines() {
        let (id, bits) = line.split_once(' ').unwrap();
        assert!(id.starts_with("spk"));
        assert_eq!(bits.len(), 350);
        assert!(bits.chars().all(|c| c == '0' || c == '1'));
    }

    let feats = dir.path().join("feats");
    ok(&["featurize", "--manifest", p(&manifest), "--out-dir", p(&feats), "--cmn"]);
    let archive = padaug_core::features::read_feature_archive(&feats.join("feats.ark"), &feats.join("feats.idx")).unwrap();
    assert_eq!(archive.len(), 12);
    assert!(archive.iter().all(|(_, f)| f.dims == 80 && f.frames == 348));

    let ts = dir.path().join("ts");
    ok(&["build-testset", "--manifest", p(&manifest), "--out-dir", p(&ts), "--variant", "ratio", "--k", "5", "--seed", "1"]);
    let records = read_manifest(ts.join("manifest.tsv")).unwrap();
    assert!(records.iter().all(|r| r.num_samples == 8 * 16_000));
}

#[test]
fn train_embed_score_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("corpus");
    corpus(&c);
    let manifest = c.join("manifest.tsv");
    let trials = c.join("trials.txt");

    let model = dir.path().join("model.bin");
    let train = |out: &Path, augment: &str| {
        ok(&[
            "train", "--manifest", p(&manifest), "--out", p(out), "--augment", augment,
            "--steps", "8", "--batch-size", "4", "--hidden-dim", "16", "--embed-dim", "8", "--seed", "2",
        ]);
    };
    train(&model, "none");
    let again = dir.path().join("again.bin");
    train(&again, "none");
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());
    let log = fs::read_to_string(dir.path().join("model.bin.log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 9);
    assert!(fs::read_to_string(dir.path().join("model.bin.meta")).unwrap().contains("augment=none"));
    let ht = dir.path().join("ht.bin");
    train(&ht, "ht");

    let emb = dir.path().join("emb.txt");
    ok(&["embed", "--manifest", p(&manifest), "--model", p(&model), "--out", p(&emb)]);
    assert_eq!(fs::read_to_string(&emb).unwrap().lines().count(), 12);
    let emb_vad = dir.path().join("emb_vad.txt");
    ok(&["embed", "--manifest", p(&manifest), "--model", p(&model), "--out", p(&emb_vad), "--vad"]);

    let scores = dir.path().join("scores.txt");
    ok(&["score", "--trials", p(&trials), "--embeddings", p(&emb), "--out", p(&scores)]);
    let n_trials = fs::read_to_string(&trials).unwrap().lines().count();
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), n_trials);
    let report = ok(&["eval", "--trials", p(&trials), "--scores", p(&scores)]);
    let eer: f64 = report.lines().nth(1).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&eer));

    let sweep = ok(&[
        "sweep", "--manifest", p(&manifest), "--trials", p(&trials),
        "--model", &format!("base={}", p(&model)), "--model", &format!("ht={}", p(&ht)), "--seed", "4",
    ]);
    let rows: Vec<&str> = sweep.lines().skip(1).collect();
    assert_eq!(sweep.lines().next().unwrap(), "system\tratio\tk_seconds\teer\tmin_dcf");
    for system in ["base", "ht"] {
        let ks: Vec<&str> = rows
            .iter()
            .filter(|r| r.starts_with(&format!("{system}\t")))
            .map(|r| r.split('\t').nth(2).unwrap())
            .collect();
        assert_eq!(ks, ["0", "1", "2", "3", "4", "5", "6", "7", "8"]);
    }
    let repeat = ok(&[
        "sweep", "--manifest", p(&manifest), "--trials", p(&trials),
        "--model", &format!("base={}", p(&model)), "--model", &format!("ht={}", p(&ht)), "--seed", "4",
    ]);
    assert_eq!(sweep, repeat);
}

mod config;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use padaug_core::augment::pad_aug_one;
use padaug_core::embedding::{load_checkpoint, save_checkpoint, train, Augment, TrainOptions, TrainSet};
use padaug_core::features::{cmn, write_feature_archive, Fbank};
use padaug_core::manifest::{read_manifest, write_manifest, UtteranceRecord};
use padaug_core::metrics::{
    det_metrics, format_report_row, format_scores, join_scores, parse_trials, score_trials, DcfParams, REPORT_HEADER,
};
use padaug_core::pipeline::{format_embeddings, format_sweep, parse_embeddings, ratio_sweep, Embedder, EvalSet};
use padaug_core::rng::seed_for_id;
use padaug_core::synth::build_corpus;
use padaug_core::testset::{build_testset, Placement, Silence};
use padaug_core::vad::detect;
use padaug_core::{read_wav, write_wav, FbankConfig, PadAugConfig, Rng, TestVariant, TestsetOptions, ToyModelConfig, VadConfig, Waveform};

#[derive(Parser, Debug)]
#[command(name = "padaug", version, about = "Silence padding augmentation and speaker-verification evaluation")]
struct Cli {
    /// key=value file of flag defaults for the subcommand; flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Repeat for more detail (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-speaker corpus with a trial list.
    Synth(SynthArgs),
    /// Apply random silence padding to every utterance of a manifest.
    Augment(AugmentArgs),
    /// Build a fixed-length evaluation variant of a manifest.
    BuildTestset(TestsetArgs),
    /// Compute log-Mel filterbank features into an archive.
    Featurize(FeaturizeArgs),
    /// Write per-frame speech masks.
    Vad(VadArgs),
    /// Train the toy embedding model.
    Train(TrainArgs),
    /// Extract one embedding per utterance.
    Embed(EmbedArgs),
    /// Cosine-score a trial list.
    Score(ScoreArgs),
    /// EER and minDCF of a score file.
    Eval(EvalArgs),
    /// EER/minDCF over silence-to-speech ratios k/3, k = 0..=8.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Root seed; every random choice derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    #[arg(long, default_value_t = 50)]
    utts: usize,
    /// Seconds per utterance.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Head and tail padding.
    Ht,
    /// Head, middle and tail padding.
    Hmt,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Ht)]
    mode: Mode,
    /// Shortest speech chunk in seconds.
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    /// Output length in seconds.
    #[arg(long, default_value_t = 3.0)]
    t_max: f64,
    #[arg(long, default_value_t = PadAugConfig::DEFAULT_SNR_MIN_DB)]
    snr_min: f64,
    #[arg(long, default_value_t = PadAugConfig::DEFAULT_SNR_MAX_DB)]
    snr_max: f64,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Original,
    Chunk3s,
    /// 3 s chunk with 1 s of silence at head and tail.
    Chunk3sHt,
    /// As chunk3s-ht plus 1 s inside the speech.
    Chunk3sHtm,
    /// 3 s chunk with k seconds of silence (see --k).
    Ratio,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlacementArg {
    /// k/2 seconds (rounded down) at the head, the rest at the tail.
    Even,
    /// Random head/tail split.
    Random,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Even => Placement::HeadTailEven,
            PlacementArg::Random => Placement::PerLayout,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SilenceArg {
    Noise,
    Zeros,
}

#[derive(Args, Debug)]
struct SilenceArgs {
    /// Padding content.
    #[arg(long, value_enum, default_value_t = SilenceArg::Noise)]
    silence: SilenceArg,
    /// SNR of noise padding relative to the chunk, in dB.
    #[arg(long, default_value_t = padaug_core::testset::DEFAULT_TEST_SNR_DB)]
    snr: f64,
    /// Take the 3 s chunk from the start instead of a random offset.
    #[arg(long)]
    from_start: bool,
}

impl SilenceArgs {
    fn options(&self) -> TestsetOptions {
        TestsetOptions {
            silence: match self.silence {
                SilenceArg::Noise => Silence::Noise { snr_db: self.snr },
                SilenceArg::Zeros => Silence::Zeros,
            },
            from_start: self.from_start,
        }
    }
}

#[derive(Args, Debug)]
struct TestsetArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// Seconds of silence for --variant ratio (0..=8).
    #[arg(long, default_value_t = 0)]
    k: u32,
    #[arg(long, value_enum, default_value_t = PlacementArg::Even)]
    placement: PlacementArg,
    #[command(flatten)]
    silence: SilenceArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct FbankArgs {
    #[arg(long, default_value_t = 80)]
    n_mels: usize,
    /// Dither amplitude added before framing; 0 disables it.
    #[arg(long, default_value_t = 0.0)]
    dither: f64,
}

impl FbankArgs {
    fn config(&self, seed: Option<u64>) -> FbankConfig {
        FbankConfig {
            n_mels: self.n_mels,
            dither: self.dither,
            dither_seed: seed.unwrap_or(0),
            ..FbankConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Writes OUT_DIR/feats.ark and OUT_DIR/feats.idx.
    #[arg(long)]
    out_dir: PathBuf,
    /// Subtract per-utterance feature means.
    #[arg(long)]
    cmn: bool,
    #[command(flatten)]
    fbank: FbankArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct VadFlags {
    #[arg(long, default_value_t = 9.0)]
    vad_offset_db: f64,
    #[arg(long, default_value_t = 10)]
    vad_hang_before: usize,
    #[arg(long, default_value_t = 20)]
    vad_hang_over: usize,
}

impl VadFlags {
    fn config(&self) -> VadConfig {
        VadConfig {
            energy_offset_db: self.vad_offset_db,
            hang_before: self.vad_hang_before,
            hang_over: self.vad_hang_over,
            ..VadConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct VadArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Mask file: `utt_id 0011...` per line.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    vad: VadFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint path; a `.meta` sidecar and a `.log.tsv` loss log are
    /// written next to it.
    #[arg(long)]
    out: PathBuf,
    /// none, ht or hmt.
    #[arg(long, default_value = "none")]
    augment: Augment,
    #[arg(long, default_value_t = 600)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 5e-5)]
    lr_final: f64,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long, default_value_t = 32.0)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    #[arg(long, default_value_t = 3.0)]
    t_max: f64,
    #[command(flatten)]
    fbank: FbankArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Embedding store: `utt_id v1 v2 ...` per line.
    #[arg(long)]
    out: PathBuf,
    /// Drop non-speech frames before feature extraction.
    #[arg(long)]
    vad: bool,
    #[command(flatten)]
    vad_flags: VadFlags,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    trials: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Score file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DcfArgs {
    #[arg(long, default_value_t = 0.01)]
    p_target: f64,
    /// Report minDCF without normalization.
    #[arg(long)]
    raw_dcf: bool,
}

impl DcfArgs {
    fn params(&self) -> DcfParams {
        DcfParams {
            p_target: self.p_target,
            normalize: !self.raw_dcf,
            ..DcfParams::default()
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    trials: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Label of the first report column.
    #[arg(long, default_value = "test")]
    name: String,
    #[command(flatten)]
    dcf: DcfArgs,
    /// Report file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Source utterances (at least 3 s recommended).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    trials: PathBuf,
    /// `name=checkpoint`; repeat for each system.
    #[arg(long = "model", required = true, value_parser = parse_named_model)]
    models: Vec<(String, PathBuf)>,
    #[arg(long, value_enum, default_value_t = PlacementArg::Even)]
    placement: PlacementArg,
    #[command(flatten)]
    silence: SilenceArgs,
    #[arg(long)]
    vad: bool,
    #[command(flatten)]
    dcf: DcfArgs,
    /// TSV file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

fn parse_named_model(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

/// Missing `--seed` is a usage error, reported like clap's own.
fn require_seed(seed: &SeedArg) -> u64 {
    match seed.seed {
        Some(s) => s,
        None => Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "--seed is required for this subcommand",
            )
            .exit(),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PADAUG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("PADAUG_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_waves(records: &[UtteranceRecord]) -> Result<Vec<Waveform>> {
    records
        .par_iter()
        .map(|r| read_wav(&r.path).with_context(|| format!("reading {}", r.path.display())))
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let seed = require_seed(&a.seed);
    let files = build_corpus(a.speakers, a.utts, a.duration, &a.out_dir, seed)?;
    info!(
        "wrote {} utterances and {} trials under {}",
        files.records.len(),
        files.trials.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn run_augment(a: &AugmentArgs) -> Result<()> {
    let seed = require_seed(&a.seed);
    let records = read_manifest(&a.manifest)?;
    let wav_dir = a.out_dir.join("wav");
    create_dir(&wav_dir)?;
    let out = records
        .par_iter()
        .map(|r| {
            let w = read_wav(&r.path).with_context(|| format!("reading {}", r.path.display()))?;
            let mut cfg = PadAugConfig::from_seconds(a.t_min, a.t_max, w.sample_rate, matches!(a.mode, Mode::Hmt));
            cfg.snr_min_db = a.snr_min;
            cfg.snr_max_db = a.snr_max;
            let aug = pad_aug_one(&w, &cfg, &mut Rng::new(seed_for_id(seed, &r.utt_id)))
                .with_context(|| format!("augmenting {}", r.utt_id))?;
            let path = wav_dir.join(format!("{}.wav", r.utt_id));
            write_wav(&path, &aug.output)?;
            Ok(UtteranceRecord {
                path,
                num_samples: aug.output.len(),
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(a.out_dir.join("manifest.tsv"), &out)?;
    info!("augmented {} utterances into {}", out.len(), a.out_dir.display());
    Ok(())
}

fn run_build_testset(a: &TestsetArgs) -> Result<()> {
    let seed = require_seed(&a.seed);
    let variant = match a.variant {
        VariantArg::Original => TestVariant::Original,
        VariantArg::Chunk3s => TestVariant::Chunk3s,
        VariantArg::Chunk3sHt => TestVariant::Chunk3sHeadTail,
        VariantArg::Chunk3sHtm => TestVariant::Chunk3sHeadTailMid,
        VariantArg::Ratio => TestVariant::RatioSweep {
            k_seconds: a.k,
            placement: a.placement.into(),
        },
    };
    let records = read_manifest(&a.manifest)?;
    let out = build_testset(&records, variant, &a.out_dir, seed, &a.silence.options())?;
    info!("built {} ({} utterances) in {}", variant.name(), out.len(), a.out_dir.display());
    Ok(())
}

fn run_featurize(a: &FeaturizeArgs) -> Result<()> {
    if a.fbank.dither > 0.0 {
        require_seed(&a.seed);
    }
    let records = read_manifest(&a.manifest)?;
    let cfg = a.fbank.config(a.seed.seed);
    let sample_rate = records.first().map_or(padaug_core::audio_io::DEFAULT_SAMPLE_RATE, |r| r.sample_rate);
    let extractor = Fbank::new(cfg, sample_rate)?;
    let entries = records
        .par_iter()
        .map(|r| {
            let w = read_wav(&r.path).with_context(|| format!("reading {}", r.path.display()))?;
            let f = extractor.compute(&w).with_context(|| format!("featurizing {}", r.utt_id))?;
            Ok((r.utt_id.clone(), if a.cmn { cmn(&f) } else { f }))
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out_dir)?;
    write_feature_archive(&a.out_dir.join("feats.ark"), &a.out_dir.join("feats.idx"), &entries)?;
    info!("wrote features for {} utterances", entries.len());
    Ok(())
}

fn run_vad(a: &VadArgs) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    let cfg = a.vad.config();
    let lines = records
        .par_iter()
        .map(|r| {
            let w = read_wav(&r.path).with_context(|| format!("reading {}", r.path.display()))?;
            let mask = detect(&w, &cfg).with_context(|| format!("vad on {}", r.utt_id))?;
            Ok(format!("{} {}\n", r.utt_id, mask.to_bits()))
        })
        .collect::<Result<Vec<_>>>()?;
    fs::write(&a.out, lines.concat()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let seed = require_seed(&a.seed);
    let records = read_manifest(&a.manifest)?;
    let data = TrainSet::from_records(&records)?;
    let sample_rate = data.waves.first().map_or(padaug_core::audio_io::DEFAULT_SAMPLE_RATE, |w| w.sample_rate);

    let mut cfg = ToyModelConfig::new(data.speakers.len(), a.steps, seed);
    cfg.input_dim = a.fbank.n_mels;
    cfg.hidden_dim = a.hidden_dim;
    cfg.embed_dim = a.embed_dim;
    cfg.batch_size = a.batch_size;
    cfg.lr_init = a.lr;
    cfg.lr_final = a.lr_final;
    cfg.margin_final = a.margin;
    cfg.scale = a.scale;

    let mut opts = TrainOptions::new(a.augment);
    opts.fbank = a.fbank.config(Some(seed));
    opts.padaug = PadAugConfig::from_seconds(a.t_min, a.t_max, sample_rate, a.augment == Augment::PadAugHmt);
    info!("model config:\n{}", cfg.to_kv());

    let out = train(&cfg, &data, &opts)?;
    let meta = format!("{}augment={}\nspeakers={}\n", cfg.to_kv(), a.augment, out.speakers.join(","));
    save_checkpoint(&a.out, &out.model, &meta)?;

    let mut log = String::from("step\tloss\tlr\tmargin\n");
    for r in &out.log {
        log.push_str(&format!("{}\t{:.6}\t{:.6e}\t{:.4}\n", r.step, r.loss, r.lr, r.margin));
    }
    let log_path = PathBuf::from(format!("{}.log.tsv", a.out.display()));
    fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    if let Some(last) = out.log.last() {
        info!("final loss {:.4} after {} steps", last.loss, out.log.len());
    }
    Ok(())
}

fn embedder(model: &Path, vad: Option<VadConfig>, sample_rate: u32) -> Result<Embedder> {
    let model = load_checkpoint(model).with_context(|| format!("loading {}", model.display()))?;
    let fbank = FbankConfig {
        n_mels: model.input_dim,
        ..FbankConfig::default()
    };
    Ok(Embedder::new(model, fbank, sample_rate, vad)?)
}

fn run_embed(a: &EmbedArgs) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    let waves = load_waves(&records)?;
    let sr = waves.first().map_or(padaug_core::audio_io::DEFAULT_SAMPLE_RATE, |w| w.sample_rate);
    let e = embedder(&a.model, a.vad.then(|| a.vad_flags.config()), sr)?;
    let ids: Vec<String> = records.iter().map(|r| r.utt_id.clone()).collect();
    let store = e.embed_all(&ids, &waves)?;
    fs::write(&a.out, format_embeddings(&store)).with_context(|| format!("writing {}", a.out.display()))?;
    info!("wrote {} embeddings", store.len());
    Ok(())
}

fn run_score(a: &ScoreArgs) -> Result<()> {
    let trials = parse_trials(&read_text(&a.trials)?)?;
    let store: HashMap<String, Vec<f64>> = parse_embeddings(&read_text(&a.embeddings)?)?;
    let scores = score_trials(&trials, &store)?;
    write_output(a.out.as_deref(), &format_scores(&scores))
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let trials = parse_trials(&read_text(&a.trials)?)?;
    let scores = join_scores(&trials, &read_text(&a.scores)?)?;
    let m = det_metrics(&scores, &a.dcf.params())?;
    write_output(a.out.as_deref(), &format!("{REPORT_HEADER}\n{}\n", format_report_row(&a.name, &m)))
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let seed = require_seed(&a.seed);
    let records = read_manifest(&a.manifest)?;
    let waves = load_waves(&records)?;
    let ids: Vec<String> = records.iter().map(|r| r.utt_id.clone()).collect();
    let trials = parse_trials(&read_text(&a.trials)?)?;
    let sr = waves.first().map_or(padaug_core::audio_io::DEFAULT_SAMPLE_RATE, |w| w.sample_rate);
    let vad = a.vad.then(VadConfig::default);
    let embedders = a
        .models
        .iter()
        .map(|(name, path)| Ok((name.clone(), embedder(path, vad.clone(), sr)?)))
        .collect::<Result<Vec<_>>>()?;
    let systems: Vec<(String, &Embedder)> = embedders.iter().map(|(n, e)| (n.clone(), e)).collect();
    let set = EvalSet {
        utt_ids: &ids,
        waves: &waves,
        trials: &trials,
    };
    let rows = ratio_sweep(&systems, &set, a.placement.into(), &a.silence.options(), seed, &a.dcf.params())?;
    write_output(a.out.as_deref(), &format_sweep(&rows))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Augment(a) => run_augment(a),
        Command::BuildTestset(a) => run_build_testset(a),
        Command::Featurize(a) => run_featurize(a),
        Command::Vad(a) => run_vad(a),
        Command::Train(a) => run_train(a),
        Command::Embed(a) => run_embed(a),
        Command::Score(a) => run_score(a),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_argv(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::command()
        .args_override_self(true)
        .try_get_matches_from(&argv)
        .and_then(|m| <Cli as clap::FromArgMatches>::from_arg_matches(&m))
        .unwrap_or_else(|e| e.exit());
    init_logging(cli.verbose);
    info!("resolved config: {:?}", cli.command);
    if let Err(e) = init_threads().and_then(|()| run(&cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

use std::fmt::Write as _;

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_speakers: usize,
    /// AAM-softmax scale.
    pub scale: f64,
    pub margin_final: f64,
    pub margin_warm_steps: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Frames per training segment.
    pub segment_frames: usize,
    pub seed: u64,
}

impl ToyModelConfig {
    /// Defaults for everything but the speaker count, step budget and seed.
    /// Margin warm-up spans half the run; learning-rate warm-up a tenth.
    pub fn new(n_speakers: usize, total_steps: usize, seed: u64) -> Self {
        Self {
            input_dim: 80,
            hidden_dim: 64,
            embed_dim: 32,
            n_speakers,
            scale: 32.0,
            margin_final: 0.2,
            margin_warm_steps: total_steps / 2,
            lr_init: 0.1,
            lr_final: 5e-5,
            warmup_steps: total_steps / 10,
            total_steps,
            batch_size: 32,
            segment_frames: 300,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.n_speakers == 0 {
            return bad("all dimensions must be >= 1");
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_init) {
            return bad("need 0 < lr_final <= lr_init");
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.margin_final) {
            return bad("margin_final must be in [0, pi/2)");
        }
        if self.batch_size == 0 || self.segment_frames < 2 {
            return bad("batch_size must be >= 1 and segment_frames >= 2");
        }
        if self.warmup_steps > self.total_steps {
            return bad("warmup_steps exceeds total_steps");
        }
        Ok(())
    }

    /// `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_dim={}", self.input_dim);
        let _ = writeln!(s, "hidden_dim={}", self.hidden_dim);
        let _ = writeln!(s, "embed_dim={}", self.embed_dim);
        let _ = writeln!(s, "n_speakers={}", self.n_speakers);
        let _ = writeln!(s, "scale={}", self.scale);
        let _ = writeln!(s, "margin_final={}", self.margin_final);
        let _ = writeln!(s, "margin_warm_steps={}", self.margin_warm_steps);
        let _ = writeln!(s, "lr_init={}", self.lr_init);
        let _ = writeln!(s, "lr_final={}", self.lr_final);
        let _ = writeln!(s, "warmup_steps={}", self.warmup_steps);
        let _ = writeln!(s, "total_steps={}", self.total_steps);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "segment_frames={}", self.segment_frames);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }
}

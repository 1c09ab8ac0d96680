use super::{ModelError, ToyModelConfig};
use crate::features::FeatureMatrix;
use crate::rng::Rng;

/// Variance floor in statistics pooling.
pub const VARIANCE_FLOOR: f64 = 1e-10;
/// Norms below this are treated as this when normalizing.
const NORM_EPS: f64 = 1e-12;

/// Model parameters. Also used as the gradient container, since gradients
/// share the parameters' shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_speakers: usize,
    /// `hidden_dim x input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `embed_dim x 2*hidden_dim`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `n_speakers x embed_dim` class weights, unit-normalized at use.
    pub head: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, embed_dim: usize, n_speakers: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            embed_dim,
            n_speakers,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; embed_dim * 2 * hidden_dim],
            b2: vec![0.0; embed_dim],
            head: vec![0.0; n_speakers * embed_dim],
        }
    }

    /// He-style Gaussian initialization; biases start at zero.
    pub fn init(cfg: &ToyModelConfig, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(cfg.input_dim, cfg.hidden_dim, cfg.embed_dim, cfg.n_speakers);
        let s1 = (2.0 / cfg.input_dim as f64).sqrt();
        let s2 = (1.0 / (2 * cfg.hidden_dim) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = s1 * rng.normal());
        m.w2.iter_mut().for_each(|w| *w = s2 * rng.normal());
        m.head.iter_mut().for_each(|w| *w = rng.normal());
        m
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.embed_dim, self.n_speakers)
    }

    /// Parameter groups in checkpoint order.
    pub fn groups(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("head", &self.head),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 5] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("head", &mut self.head),
        ]
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ToyModel) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, f: &FeatureMatrix) -> Result<(), ModelError> {
        if f.dims != self.input_dim {
            return Err(ModelError::DimMismatch {
                expected: self.input_dim,
                found: f.dims,
            });
        }
        if f.frames < 2 {
            return Err(ModelError::TooFewFrames(f.frames));
        }
        Ok(())
    }
}

/// Per-dimension mean then population standard deviation over time.
pub fn tsp_pool(h: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
    if h.frames < 2 {
        return Err(ModelError::TooFewFrames(h.frames));
    }
    Ok(pool_stats(h).pooled)
}

struct PoolStats {
    pooled: Vec<f64>,
    /// Whether each dimension's variance was above the floor.
    live: Vec<bool>,
}

fn pool_stats(h: &FeatureMatrix) -> PoolStats {
    let dims = h.dims;
    let n = h.frames as f64;
    let mean = h.column_means();
    let mut var = vec![0.0; dims];
    for row in h.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut pooled = mean;
    let mut live = Vec::with_capacity(dims);
    for v in &var {
        let v = v / n;
        live.push(v > VARIANCE_FLOOR);
        pooled.push(v.max(VARIANCE_FLOOR).sqrt());
    }
    PoolStats { pooled, live }
}

struct Forward {
    pre: FeatureMatrix,
    hidden: FeatureMatrix,
    stats: PoolStats,
    z_norm: f64,
    emb: Vec<f64>,
}

fn run_forward(m: &ToyModel, f: &FeatureMatrix) -> Forward {
    let (hd, id) = (m.hidden_dim, m.input_dim);
    let mut pre = FeatureMatrix::zeros(f.frames, hd);
    for t in 0..f.frames {
        let x = f.row(t);
        for (j, out) in pre.row_mut(t).iter_mut().enumerate() {
            let w = &m.w1[j * id..(j + 1) * id];
            *out = m.b1[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let hidden = FeatureMatrix::new(pre.frames, hd, pre.values.iter().map(|&v| v.max(0.0)).collect());
    let stats = pool_stats(&hidden);
    let pd = 2 * hd;
    let z: Vec<f64> = (0..m.embed_dim)
        .map(|k| {
            let w = &m.w2[k * pd..(k + 1) * pd];
            m.b2[k] + w.iter().zip(&stats.pooled).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
    let emb = z.iter().map(|v| v / z_norm).collect();
    Forward {
        pre,
        hidden,
        stats,
        z_norm,
        emb,
    }
}

/// L2-normalized embedding of a feature matrix.
pub fn forward(m: &ToyModel, f: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
    m.check_input(f)?;
    Ok(run_forward(m, f).emb)
}

#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub loss: f64,
    pub d_emb: Vec<f64>,
    pub d_head: Vec<f64>,
}

/// Margin-adjusted target cosine and its derivative w.r.t. the cosine.
///
/// `cos(theta + m)` while `theta + m <= pi`; beyond that the penalty
/// continues linearly as `cos(theta) - m sin(m)` so the logit keeps
/// decreasing in `m`.
fn margin_cos(cos: f64, margin: f64) -> (f64, f64) {
    let (sin_m, cos_m) = margin.sin_cos();
    let threshold = (std::f64::consts::PI - margin).cos();
    if cos > threshold {
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let value = cos * cos_m - sin * sin_m;
        let deriv = if sin > NORM_EPS { cos_m + cos * sin_m / sin } else { cos_m };
        (value, deriv)
    } else {
        (cos - margin * sin_m, 1.0)
    }
}

/// AAM-softmax cross-entropy for one embedding, with gradients w.r.t. the
/// embedding and the raw (unnormalized) class weights.
pub fn aam_head(
    emb: &[f64],
    label: usize,
    head: &[f64],
    n_speakers: usize,
    margin: f64,
    scale: f64,
) -> Result<HeadOutput, ModelError> {
    let dim = emb.len();
    if label >= n_speakers {
        return Err(ModelError::InvalidLabel { label, n_speakers });
    }
    if head.len() != n_speakers * dim {
        return Err(ModelError::DimMismatch {
            expected: n_speakers * dim,
            found: head.len(),
        });
    }
    let norms: Vec<f64> = head
        .chunks_exact(dim)
        .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS))
        .collect();
    let cosines: Vec<f64> = head
        .chunks_exact(dim)
        .zip(&norms)
        .map(|(w, n)| w.iter().zip(emb).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect();
    let (phi, dphi) = margin_cos(cosines[label], margin);
    let logits: Vec<f64> = cosines
        .iter()
        .enumerate()
        .map(|(j, &c)| scale * if j == label { phi } else { c })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let loss = max + sum_exp.ln() - logits[label];

    let mut d_emb = vec![0.0; dim];
    let mut d_head = vec![0.0; head.len()];
    for (j, w) in head.chunks_exact(dim).enumerate() {
        let p = (logits[j] - max).exp() / sum_exp;
        let g = if j == label { (p - 1.0) * dphi } else { p };
        let d_cos = scale * g;
        let inv = 1.0 / norms[j];
        // cos_j = (w_j . e) / |w_j|
        let w_dot_e = cosines[j];
        for k in 0..dim {
            let w_hat = w[k] * inv;
            d_emb[k] += d_cos * w_hat;
            d_head[j * dim + k] = d_cos * (emb[k] - w_dot_e * w_hat) * inv;
        }
    }
    Ok(HeadOutput { loss, d_emb, d_head })
}

/// Loss on one labelled segment and its gradient w.r.t. every parameter.
pub fn aam_loss(
    m: &ToyModel,
    f: &FeatureMatrix,
    label: usize,
    margin: f64,
    scale: f64,
) -> Result<(f64, ToyModel), ModelError> {
    m.check_input(f)?;
    let fw = run_forward(m, f);
    let head = aam_head(&fw.emb, label, &m.head, m.n_speakers, margin, scale)?;
    let mut grad = m.zeros_like();
    grad.head = head.d_head;

    // e = z / |z|
    let e_dot = fw.emb.iter().zip(&head.d_emb).map(|(a, b)| a * b).sum::<f64>();
    let d_z: Vec<f64> = fw
        .emb
        .iter()
        .zip(&head.d_emb)
        .map(|(e, d)| (d - e * e_dot) / fw.z_norm)
        .collect();

    let hd = m.hidden_dim;
    let pd = 2 * hd;
    let mut d_pooled = vec![0.0; pd];
    for (k, dz) in d_z.iter().enumerate() {
        grad.b2[k] = *dz;
        let row = k * pd..(k + 1) * pd;
        for (((g, w), p), d) in grad.w2[row.clone()]
            .iter_mut()
            .zip(&m.w2[row])
            .zip(&fw.stats.pooled)
            .zip(d_pooled.iter_mut())
        {
            *g = dz * p;
            *d += dz * w;
        }
    }

    let n = f.frames as f64;
    let (mean, std) = fw.stats.pooled.split_at(hd);
    let id = m.input_dim;
    for t in 0..f.frames {
        let h = fw.hidden.row(t);
        let pre = fw.pre.row(t);
        let x = f.row(t);
        for j in 0..hd {
            if pre[j] <= 0.0 {
                continue;
            }
            let mut d_h = d_pooled[j] / n;
            if fw.stats.live[j] {
                d_h += d_pooled[hd + j] * (h[j] - mean[j]) / (n * std[j]);
            }
            grad.b1[j] += d_h;
            let w = &mut grad.w1[j * id..(j + 1) * id];
            w.iter_mut().zip(x).for_each(|(g, xi)| *g += d_h * xi);
        }
    }
    Ok((head.loss, grad))
}

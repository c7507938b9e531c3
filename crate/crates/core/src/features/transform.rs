use crate::error::{Error, Result};
use crate::numcore::Tensor;

use super::{FeatureConfig, Normalization};

/// Half-width of the derivative regression window.
pub const DELTA_WINDOW: usize = 2;

/// Regression derivative `d_t = Σ_n n·(c_{t+n} − c_{t−n}) / (2·Σ_n n²)`
/// over `n = 1..=2`, with edge frames replicated.
pub fn delta(feat: &Tensor) -> Tensor {
    let (t_len, d) = (feat.shape()[0], feat.shape()[1]);
    let norm = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize| feat.row(t.clamp(0, t_len as isize - 1) as usize);
    let mut out = Vec::with_capacity(t_len * d);
    for t in 0..t_len as isize {
        for c in 0..d {
            let s: f64 = (1..=DELTA_WINDOW as isize).map(|n| n as f64 * (at(t + n)[c] - at(t - n)[c])).sum();
            out.push(s / norm);
        }
    }
    Tensor::new(vec![t_len, d], out).expect("shape matches")
}

/// `[T, d] -> [T, (order + 1)·d]`: statics, then each derivative order
/// (the second order is the derivative of the first).
pub fn add_deltas(feat: &Tensor, order: usize) -> Result<Tensor> {
    if feat.rank() != 2 || feat.shape()[0] == 0 {
        return Err(Error::Input(format!("add_deltas: expected [T ≥ 1, d], got {:?}", feat.shape())));
    }
    let mut parts = vec![feat.clone()];
    for _ in 0..order {
        let next = delta(parts.last().expect("non-empty"));
        parts.push(next);
    }
    let d = feat.shape()[1];
    let rows: Vec<Vec<f64>> = (0..feat.shape()[0])
        .map(|t| parts.iter().flat_map(|p| p.row(t).iter().copied()).collect())
        .collect();
    Tensor::from_rows(&rows, d * (order + 1))
}

/// Per-column zero mean, unit variance over the utterance. Columns with
/// zero variance are only centered.
pub fn normalize_utterance(feat: &Tensor) -> Tensor {
    let (t_len, d) = (feat.shape()[0], feat.shape()[1]);
    let n = t_len as f64;
    let mut out = feat.clone();
    for c in 0..d {
        let mean = (0..t_len).map(|t| feat.row(t)[c]).sum::<f64>() / n;
        let var = (0..t_len).map(|t| (feat.row(t)[c] - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for t in 0..t_len {
            out.data_mut()[t * d + c] = (feat.row(t)[c] - mean) * scale;
        }
    }
    out
}

/// Bias-corrected exponential moving mean and variance normalizer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningNorm {
    decay: f64,
    steps: i32,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Variance floor of the running normalizer.
pub const RUNNING_VAR_FLOOR: f64 = 1e-4;

impl RunningNorm {
    pub fn new(decay: f64, dim: usize) -> Self {
        Self { decay, steps: 0, mean: vec![0.0; dim], var: vec![0.0; dim] }
    }

    /// Updates the statistics with `x` and returns `x` normalized by them:
    /// `m ← βm + (1−β)x`, `v ← βv + (1−β)(x − m̂)²`, with `m̂`, `v̂` divided
    /// by `1 − βᵗ`.
    pub fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        self.steps = self.steps.saturating_add(1);
        let a = 1.0 - self.decay;
        let correction = 1.0 - self.decay.powi(self.steps);
        x.iter()
            .enumerate()
            .map(|(c, &v)| {
                self.mean[c] = self.decay * self.mean[c] + a * v;
                let mean = self.mean[c] / correction;
                self.var[c] = self.decay * self.var[c] + a * (v - mean) * (v - mean);
                let var = (self.var[c] / correction).max(RUNNING_VAR_FLOOR);
                (v - mean) / var.sqrt()
            })
            .collect()
    }
}

/// Running normalization over a whole utterance, frame by frame.
pub fn normalize_running(feat: &Tensor, decay: f64) -> Tensor {
    let d = feat.shape()[1];
    let mut norm = RunningNorm::new(decay, d);
    let rows: Vec<Vec<f64>> = feat.rows().map(|r| norm.apply(r)).collect();
    Tensor::from_rows(&rows, d).expect("widths match")
}

/// Concatenates frames `t − left ..= t + right` for every `t`, replicating
/// the first and last frames at the edges.
pub fn stack_frames(feat: &Tensor, left: usize, right: usize) -> Tensor {
    let (t_len, d) = (feat.shape()[0], feat.shape()[1]);
    let rows: Vec<Vec<f64>> = (0..t_len as isize)
        .map(|t| {
            (t - left as isize..=t + right as isize)
                .flat_map(|p| feat.row(p.clamp(0, t_len as isize - 1) as usize).iter().copied())
                .collect()
        })
        .collect();
    Tensor::from_rows(&rows, d * (left + 1 + right)).expect("widths match")
}

/// Normalization as configured, then stacking.
pub fn stack_and_normalize(feat: &Tensor, cfg: &FeatureConfig) -> Result<Tensor> {
    if feat.rank() != 2 || feat.shape()[0] == 0 {
        return Err(Error::Input(format!("expected [T ≥ 1, d] features, got {:?}", feat.shape())));
    }
    let normalized = match cfg.normalize {
        Normalization::Utterance => normalize_utterance(feat),
        Normalization::Running { decay } => normalize_running(feat, decay),
        Normalization::None => feat.clone(),
    };
    Ok(stack_frames(&normalized, cfg.stack_left, cfg.stack_right))
}

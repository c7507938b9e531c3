use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ParamGrads, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.98, eps: 1e-9 }
    }
}

/// First and second moment estimates per parameter, and the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// One bias-corrected Adam update at step `state.t + 1`:
/// `θ ← θ − lr · m̂ / (√v̂ + ε)`. Parameters without a gradient entry are
/// left alone.
pub fn adam_step(params: &mut ParamStore, grads: &ParamGrads, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let p = params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::dim("adam_step", format!("`{name}`: grad {:?} vs param {:?}", g.shape(), p.shape())));
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Global L2 norm of all gradients.
pub fn grad_norm(grads: &ParamGrads) -> f64 {
    grads.values().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Linear warmup to `peak` over `warmup_steps`, then division by 10 every
/// `decay_every` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: u64,
    pub decay_every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { peak: 1e-3, warmup_steps: 500, decay_every: 10 }
    }
}

impl LrSchedule {
    /// Rate for optimizer step `step` (1-based) taken during `epoch`
    /// (0-based). Decay only applies once warmup is over.
    pub fn lr(&self, step: u64, epoch: usize) -> f64 {
        if step <= self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let k = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.peak * 0.1f64.powi(k as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::Config(format!("lr_peak {} must be positive", self.peak)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(values.to_vec()));
        s
    }

    fn grads(values: &[f64]) -> ParamGrads {
        [("w".to_string(), Tensor::vector(values.to_vec()))].into()
    }

    #[test]
    fn first_step_is_a_sign_step() {
        let mut p = store(&[1.0, -2.0, 0.5, 3.0]);
        let cfg = AdamConfig { eps: 0.0, ..AdamConfig::default() };
        let mut st = AdamState::default();
        adam_step(&mut p, &grads(&[0.3, -7.0, 1e-6, 0.0]), &mut st, 0.01, &cfg).unwrap();
        let w = p.get("w").unwrap().data().to_vec();
        assert!((w[0] - 0.99).abs() < 1e-15);
        assert!((w[1] + 1.99).abs() < 1e-15);
        assert!((w[2] - 0.49).abs() < 1e-15);
        // 0/0 with ε = 0: the zero-grad coordinate is only defined for ε > 0.
        let mut p = store(&[3.0]);
        adam_step(&mut p, &grads(&[0.0]), &mut AdamState::default(), 0.01, &AdamConfig::default()).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[3.0]);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = store(&[1.0, 2.0]);
        let before = p.clone();
        let mut st = AdamState::default();
        for _ in 0..5 {
            adam_step(&mut p, &grads(&[0.0, 0.0]), &mut st, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn matches_a_scalar_oracle() {
        let gs = [0.5, -1.25, 2.0, 0.1, -0.7];
        let (b1, b2, eps, lr) = (0.9f64, 0.98f64, 1e-9, 0.05);
        let (mut theta, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
        let mut p = store(&[0.3]);
        let mut st = AdamState::default();
        for (i, &g) in gs.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            adam_step(&mut p, &grads(&[g]), &mut st, lr, &AdamConfig::default()).unwrap();
            assert!((p.get("w").unwrap().data()[0] - theta).abs() < 1e-12);
        }
        assert_eq!(st.t, 5);
    }

    #[test]
    fn unknown_or_misshapen_gradients_are_rejected() {
        let mut p = store(&[1.0]);
        let bad: ParamGrads = [("x".to_string(), Tensor::vector(vec![1.0]))].into();
        assert!(matches!(adam_step(&mut p, &bad, &mut AdamState::default(), 0.1, &AdamConfig::default()), Err(Error::Contract(_))));
        assert!(adam_step(&mut p, &grads(&[1.0, 2.0]), &mut AdamState::default(), 0.1, &AdamConfig::default()).is_err());
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = grads(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut g, 5.0), 5.0);
        assert_eq!(g["w"].data(), &[3.0, 4.0]);
        let mut g = grads(&[30.0, 40.0]);
        assert_eq!(clip_grad_norm(&mut g, 5.0), 50.0);
        assert!((grad_norm(&g) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let s = LrSchedule { peak: 1e-3, warmup_steps: 100, decay_every: 10 };
        assert!((s.lr(1, 0) - 1e-5).abs() < 1e-18);
        assert!((s.lr(50, 0) - 5e-4).abs() < 1e-15);
        assert_eq!(s.lr(100, 0), 1e-3);
        assert_eq!(s.lr(101, 9), 1e-3);
        assert!((s.lr(101, 10) - 1e-4).abs() < 1e-18);
        assert!((s.lr(5000, 25) - 1e-5).abs() < 1e-18);
        // No decay while warming up, even past a decay boundary.
        assert!((s.lr(50, 10) - 5e-4).abs() < 1e-15);
        let flat = LrSchedule { warmup_steps: 0, ..s };
        assert_eq!(flat.lr(1, 0), 1e-3);
    }
}

//! Audio frontend and the synthetic task.
//!
//! The offline pipeline is `fbank → deltas → normalize → stack`; with the
//! default config a 16 kHz utterance becomes 2337-wide rows (41 static
//! coefficients, two derivative orders, 19 stacked frames).
//! [`OnlineFrontend`] produces the same rows incrementally.

mod fbank;
mod io;
mod online;
mod synth;
mod transform;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub use fbank::{fbank, fbank_with, frame_count, hz_to_mel, mel_to_hz, MelBank, LOG_FLOOR};
pub use io::{read_feature_dump, read_wav, write_feature_dump, write_wav, FeatureDump};
pub use online::OnlineFrontend;
pub use synth::{SynthConfig, SynthTask, Utterance};
pub use transform::{add_deltas, delta, normalize_running, normalize_utterance, stack_and_normalize, stack_frames};

/// How feature columns are normalized before stacking.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Normalization {
    /// Mean and variance of the whole utterance.
    Utterance,
    /// Bias-corrected exponential moving mean and variance, computable
    /// frame by frame.
    Running { decay: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub n_mels: usize,
    pub include_energy: bool,
    /// Number of derivative orders appended (0, 1 or 2).
    pub delta_order: usize,
    pub stack_left: usize,
    pub stack_right: usize,
    pub normalize: Normalization,
}

impl Default for FeatureConfig {
    /// 16 kHz, 25 ms / 10 ms framing, 40 mels plus energy, two derivative
    /// orders, ±9 stacked frames, per-utterance normalization.
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            n_mels: 40,
            include_energy: true,
            delta_order: 2,
            stack_left: 9,
            stack_right: 9,
            normalize: Normalization::Utterance,
        }
    }
}

/// Decay of the running normalizer used by streaming frontends.
pub const RUNNING_DECAY: f64 = 0.999;

impl FeatureConfig {
    /// A narrow variant for desk-scale models: 23 mels plus energy, no
    /// derivatives or stacking, running normalization (so offline and
    /// streaming features coincide).
    pub fn desk() -> Self {
        Self {
            n_mels: 23,
            delta_order: 0,
            stack_left: 0,
            stack_right: 0,
            normalize: Normalization::Running { decay: RUNNING_DECAY },
            ..Self::default()
        }
    }

    pub fn frame_len(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_len_ms / 1000.0).round() as usize
    }

    pub fn frame_shift(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_shift_ms / 1000.0).round() as usize
    }

    /// Static coefficients per frame.
    pub fn static_dim(&self) -> usize {
        self.n_mels + usize::from(self.include_energy)
    }

    /// Width after derivatives, before stacking.
    pub fn base_dim(&self) -> usize {
        self.static_dim() * (self.delta_order + 1)
    }

    /// Final row width.
    pub fn dim(&self) -> usize {
        self.base_dim() * (self.stack_left + 1 + self.stack_right)
    }

    /// Frames of future context one output row depends on, in fbank frames.
    pub fn lookahead(&self) -> usize {
        2 * self.delta_order + self.stack_right
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.n_mels == 0 {
            return Err(Error::Config("sample rate and mel count must be positive".into()));
        }
        if self.frame_shift() == 0 || self.frame_len() < 2 {
            return Err(Error::Config("frame length and shift must cover at least one sample".into()));
        }
        if self.delta_order > 2 {
            return Err(Error::Config(format!("delta_order {} (at most 2)", self.delta_order)));
        }
        if let Normalization::Running { decay } = self.normalize {
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::Config(format!("running decay {decay} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("feature config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// The full offline pipeline on one utterance of PCM samples in [-1, 1].
pub fn extract(pcm: &[f64], cfg: &FeatureConfig) -> Result<Tensor> {
    cfg.validate()?;
    let statics = fbank(pcm, cfg)?;
    let with_deltas = add_deltas(&statics, cfg.delta_order)?;
    stack_and_normalize(&with_deltas, cfg)
}

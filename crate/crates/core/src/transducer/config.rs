use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{BlockConfig, BlockKind, ConvBlockConfig, ConvKind, MemoryInput};

/// One side of the model: conv frontend followed by a stack of blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub kind: BlockKind,
    pub layers: usize,
    /// Attention window; an absent key means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default)]
    pub relative_bias: bool,
    #[serde(default)]
    pub memory_input: MemoryInput,
    pub conv: Vec<ConvBlockConfig>,
}

/// Architecture hyperparameters. The vocabulary size is not part of the
/// config; it comes from the [`Vocabulary`](super::Vocabulary).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature width of one input frame.
    pub d_in: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub encoder: StackConfig,
    pub predictor: StackConfig,
}

impl ModelConfig {
    /// Desk-scale default: d=64, 4 heads, FFN 128, four encoder and two
    /// predictor memory blocks.
    pub fn desk(d_in: usize) -> Self {
        let conv2d = |stride| ConvBlockConfig {
            kind: ConvKind::TwoD,
            kernel_freq: 5,
            kernel_time: 5,
            channels: 4,
            time_stride: stride,
            layers_per_block: 2,
            causal: false,
        };
        let d_model = 64;
        Self {
            d_in,
            d_model,
            heads: 4,
            d_ff: 128,
            encoder: StackConfig {
                kind: BlockKind::Msa,
                layers: 4,
                left: Some(8),
                right: Some(2),
                relative_bias: true,
                memory_input: MemoryInput::Center,
                conv: vec![conv2d(3), conv2d(1)],
            },
            predictor: StackConfig {
                kind: BlockKind::Msa,
                layers: 2,
                left: Some(8),
                right: Some(0),
                relative_bias: true,
                memory_input: MemoryInput::Center,
                conv: vec![ConvBlockConfig { layers_per_block: 1, ..ConvBlockConfig::full_1d(d_model) }],
            },
        }
    }

    /// Full-size configuration: 12 encoder blocks (l=16, r=4), two
    /// predictor blocks (l=10, r=0), d=1024, 8 heads, FFN 2048.
    pub fn full(d_in: usize) -> Self {
        let d_model = 1024;
        Self {
            d_in,
            d_model,
            heads: 8,
            d_ff: 2048,
            encoder: StackConfig {
                kind: BlockKind::Msa,
                layers: 12,
                left: Some(16),
                right: Some(4),
                relative_bias: false,
                memory_input: MemoryInput::Center,
                conv: vec![ConvBlockConfig::full_2d(3), ConvBlockConfig::full_2d(1)],
            },
            predictor: StackConfig {
                kind: BlockKind::Msa,
                layers: 2,
                left: Some(10),
                right: Some(0),
                relative_bias: false,
                memory_input: MemoryInput::Center,
                conv: vec![ConvBlockConfig::full_1d(d_model)],
            },
        }
    }

    pub fn encoder_block(&self) -> BlockConfig {
        self.block(&self.encoder)
    }

    pub fn predictor_block(&self) -> BlockConfig {
        self.block(&self.predictor)
    }

    fn block(&self, s: &StackConfig) -> BlockConfig {
        BlockConfig {
            kind: s.kind,
            d_model: self.d_model,
            heads: self.heads,
            d_ff: self.d_ff,
            left: s.left,
            right: s.right,
            relative_bias: s.relative_bias,
            memory_input: s.memory_input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_model < 2 || self.d_ff == 0 {
            return Err(Error::Config("d_in, d_model and d_ff must be positive (d_model ≥ 2)".into()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!("d_model {} not divisible by {} heads", self.d_model, self.heads)));
        }
        for (name, s) in [("encoder", &self.encoder), ("predictor", &self.predictor)] {
            if s.conv.is_empty() {
                return Err(Error::Config(format!("{name}: at least one conv block required")));
            }
        }
        if self.encoder.conv.iter().any(|c| c.kind != ConvKind::TwoD) {
            return Err(Error::Config("encoder conv blocks must be 2-D".into()));
        }
        let p = &self.predictor;
        if p.conv.iter().any(|c| c.kind != ConvKind::OneD || !c.causal || c.time_stride != 1) {
            return Err(Error::Config("predictor conv blocks must be causal 1-D with stride 1".into()));
        }
        let causal = match p.kind {
            BlockKind::Msa | BlockKind::RestrictedSa => p.right == Some(0),
            BlockKind::Lstm => true,
            BlockKind::Blstm => false,
        };
        if !causal {
            return Err(Error::Config("predictor must be causal (right = 0, no BLSTM)".into()));
        }
        if p.kind == BlockKind::Msa && p.memory_input == MemoryInput::Window && p.left.is_none() {
            return Err(Error::Config("window memory input needs a finite left window".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for cfg in [ModelConfig::desk(16), ModelConfig::full(123)] {
            let text = cfg.to_toml();
            assert_eq!(ModelConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unbounded_window_is_an_absent_key() {
        let mut cfg = ModelConfig::desk(16);
        cfg.encoder.left = None;
        let text = cfg.to_toml();
        assert!(!text.contains("left = 8\nright = 2"));
        assert_eq!(ModelConfig::from_toml(&text).unwrap().encoder.left, None);
    }

    #[test]
    fn rejects_non_causal_predictor() {
        let mut cfg = ModelConfig::desk(16);
        cfg.predictor.right = Some(1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ModelConfig::desk(16);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, SynthConfig, SynthTask, Utterance};
use crate::layers::BlockKind;
use crate::transducer::ModelConfig;

use super::optim::{AdamConfig, LrSchedule};

/// Where training utterances come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Template frames straight from the synthetic task.
    Templates,
    /// The task's audio rendering through the feature frontend.
    Audio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub n_train: usize,
    pub n_valid: usize,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
}

/// First utterance seed of the held-out set; training seeds count up
/// from zero.
pub const VALID_SEED_BASE: u64 = 1 << 40;

impl DataConfig {
    /// Width of one input frame.
    pub fn d_in(&self) -> usize {
        match self.source {
            DataSource::Templates => self.synth.d_in,
            DataSource::Audio => self.features.dim(),
        }
    }

    pub fn utterance(&self, task: &SynthTask, seed: u64) -> Result<Utterance> {
        match self.source {
            DataSource::Templates => Ok(task.utterance(seed)),
            DataSource::Audio => task.audio_utterance(seed, &self.features),
        }
    }
}

/// Generated training and held-out utterances.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub task: SynthTask,
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
}

impl Dataset {
    pub fn build(cfg: &DataConfig) -> Result<Self> {
        let task = SynthTask::new(cfg.synth.clone())?;
        let train = (0..cfg.n_train as u64).map(|s| cfg.utterance(&task, s)).collect::<Result<_>>()?;
        let valid = (0..cfg.n_valid as u64).map(|s| cfg.utterance(&task, VALID_SEED_BASE + s)).collect::<Result<_>>()?;
        Ok(Self { task, train, valid })
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub dropout: f64,
    /// Per-epoch checkpoints retained per stage.
    pub keep_checkpoints: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    pub data: DataConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    /// Desk scale on template features.
    fn default() -> Self {
        let synth = SynthConfig::default();
        let mut model = ModelConfig::desk(synth.d_in);
        model.d_model = 32;
        model.d_ff = 64;
        model.predictor.conv[0].channels = 32;
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 16,
            clip_norm: 5.0,
            dropout: 0.0,
            keep_checkpoints: 2,
            adam: AdamConfig::default(),
            schedule: LrSchedule { peak: 2e-3, warmup_steps: 300, decay_every: 7 },
            data: DataConfig {
                source: DataSource::Templates,
                n_train: 3000,
                n_valid: 200,
                synth,
                features: FeatureConfig::desk(),
            },
            model,
        }
    }
}

impl TrainConfig {
    /// Desk scale on the audio rendering, through the desk frontend.
    pub fn audio() -> Self {
        let mut cfg = Self::default();
        cfg.data.source = DataSource::Audio;
        cfg.model.d_in = cfg.data.features.dim();
        cfg
    }

    /// Encoder comparison setup: longer utterances with a strong channel
    /// offset, two encoder layers with narrow windows (l=2, r=1), so that
    /// context beyond the attention window pays off.
    pub fn context_comparison(kind: BlockKind, seed: u64) -> Self {
        let mut cfg = Self { seed, epochs: 7, ..Self::default() };
        cfg.schedule = LrSchedule { peak: 2e-3, warmup_steps: 200, decay_every: 5 };
        cfg.data.n_train = 1500;
        cfg.data.n_valid = 300;
        cfg.data.synth.offset = 2.0;
        cfg.data.synth.min_len = 6;
        cfg.data.synth.max_len = 12;
        cfg.model.encoder.kind = kind;
        cfg.model.encoder.layers = 2;
        cfg.model.encoder.left = Some(2);
        cfg.model.encoder.right = Some(1);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        self.data.synth.validate()?;
        self.data.features.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.data.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        if self.model.d_in != self.data.d_in() {
            return Err(Error::Config(format!(
                "model d_in {} does not match the data frame width {}",
                self.model.d_in,
                self.data.d_in()
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }
}

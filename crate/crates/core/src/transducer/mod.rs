//! Encoder, prediction network and joint network, plus the vocabulary and
//! checkpoint format.

mod checkpoint;
mod config;
mod model;
mod vocab;

pub use checkpoint::{load_checkpoint, load_partial, save_checkpoint, save_checkpoint_as, Dtype, CHECKPOINT_VERSION};
pub use config::{ModelConfig, StackConfig};
pub use model::{
    Architecture, JointKernel, TransducerModel, CE_HEAD_PREFIX, CTC_HEAD_PREFIX, ENCODER_PREFIX, JOINT_PREFIX,
    PREDICTOR_PREFIX,
};
pub use vocab::{Vocabulary, BLANK_SYMBOL, SOS_SYMBOL};

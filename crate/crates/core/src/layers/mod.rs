//! Learned building blocks.
//!
//! Every layer has a graph form (`forward`, differentiable, whole
//! sequences) and a bound per-row form (`bind` → `*Ref`) that the
//! streaming engine drives one position at a time. Both go through the
//! same row kernels.

mod attention;
mod basic;
mod block;
mod conv;
mod recurrent;

pub use attention::{AttentionConfig, AttentionRef, MultiHeadAttention};
pub use basic::{FeedForward, FeedForwardRef, LayerNorm, LayerNormRef, Linear, LinearRef, LN_EPS};
pub(crate) use basic::add_rows;
pub use block::{Block, BlockConfig, BlockKind, MsaBlock, RestrictedBlock};
pub use conv::{ConvBlockConfig, ConvFrontend, ConvKind, ConvLayer, ConvLayerRef};
pub use recurrent::{Lstm, LstmRef, LstmState, MemoryInput, MemoryPath, MemoryRef, FORGET_BIAS_INIT};

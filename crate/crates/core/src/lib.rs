//! Streaming sequence transduction with memory-augmented windowed
//! self-attention.
//!
//! The crate is organized bottom-up:
//!
//! * [`numcore`]: fp64 tensors, reverse-mode gradients, gradient checking.
//! * [`features`]: log-mel frontend and a synthetic learnable task.
//! * [`layers`]: conv frontends, attention, LSTM and the memory block.
//! * [`transducer`]: encoder / prediction / joint networks and checkpoints.
//! * [`losses`]: RNN-T, CTC and next-symbol cross-entropy.
//! * [`decoding`]: greedy and beam search, n-gram fusion, error rates.
//! * [`streaming`]: frame-by-frame inference and compute accounting.
//! * [`train`]: optimizer, schedule and the staged training protocol.
//! * [`cli`]: the commands behind the `msa` binary.

pub mod cli;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod features;
pub mod layers;
pub mod losses;
pub mod numcore;
pub mod streaming;
pub mod train;
pub mod transducer;

pub use error::{Error, Result};

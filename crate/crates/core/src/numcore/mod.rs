//! Dense fp64 tensors with reverse-mode gradients.

mod gradcheck;
mod graph;
pub mod kernels;
pub mod nn;
mod ops;
mod params;
mod tensor;

pub use gradcheck::{grad_check, MAGNITUDE_FLOOR, STEP};
pub use graph::{BackwardCtx, BackwardFn, Gradients, Graph, Var};
pub use ops::{concat_cols, gather_rows};
pub use params::{Ctx, ParamGrads, ParamStore};
pub use tensor::Tensor;

//! Minimal differentiable-computation core: tensors, conv/linear layers,
//! reverse-mode gradients over a define-by-run tape, Adam, and a named-tensor
//! checkpoint format.
//!
//! Scope is deliberately narrow — exactly the operations the perception,
//! physics, and rendering networks need. No broadcasting, no GPU.

mod adam;
pub mod check;
mod checkpoint;
mod error;
pub mod init;
pub mod kernels;
mod params;
mod tape;
mod tensor;

mod real;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, read_meta, save_checkpoint};
pub use error::NnError;
pub use kernels::{ConvCfg, ConvTCfg};
pub use params::{GradStore, ParamId, ParamSet};
pub use real::{DType, Real};
pub use tape::{pair_rows, NodeId, Tape};
pub use tensor::Tensor;

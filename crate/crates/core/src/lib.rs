//! Object-centric scene learning and planning for a deterministic 2-D block
//! world.
//!
//! The crate is organized as a pipeline:
//!
//! * [`nn`] — a minimal define-by-run tensor core with reverse-mode
//!   gradients and Adam, sized for the three networks this project trains.
//! * [`world`] — the ground-truth simulator: quasi-static block settling,
//!   rasterization, segmentation, and training-pair generation.
//! * [`model`] — the learned modules: a per-segment perception encoder, a
//!   pairwise-interaction physics predictor, and a compositing renderer.
//! * [`train`] — joint training of the three modules from before/after
//!   image pairs.
//! * [`plan`] — sampling/CEM construction planning in the learned object
//!   space, plus the action embedder and the max-height variant.
//! * [`eval`] — tower-matching accuracy, oracle/ablation baselines, and
//!   prediction-quality reports.

pub mod eval;
pub mod model;
pub mod nn;
pub mod plan;
pub mod train;
pub mod world;

pub use model::{ModelConfig, Nets, ObjectSet, ObjectVec};
pub use nn::{AdamState, GradStore, ParamSet, Real, Tape, Tensor};
pub use plan::{Action, CemConfig, Embedder};
pub use world::{Block, BlockShape, Frame, Orientation, Scene, TrainingPair};

//! Sampling-based construction planning in learned object space.
//!
//! A step samples placement actions, observes each one as a held-block
//! segment (or embeds it directly), pushes the resulting object set through
//! the physics predictor, and keeps the action whose settled vector lands
//! nearest a remaining goal vector. The cross-entropy method concentrates
//! the sampling distribution on the low-distance region over a few
//! iterations. Executing the winner in the simulator and retiring its goal
//! repeats until every goal object is placed.

mod action;
mod cem;
mod embedder;
mod heatmap;
mod planner;
mod score;

pub use action::{Action, ActionSampler};
pub use cem::{elite_indices, CemConfig, CemDistribution};
pub use embedder::{train_embedder, Embedder, EmbedderReport};
pub use heatmap::{score_heatmap, write_score_heatmap};
pub use planner::{
    cem_step, plan_and_execute, plan_max_height, predicted_top_height, PlanTrace, StepTrace,
};
pub use score::{score_action, ActionScorer, LearnedScorer, SampleScore};

#[cfg(test)]
mod tests;

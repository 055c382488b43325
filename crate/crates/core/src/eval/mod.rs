//! Evaluation: tower-matching accuracy, planner baselines (oracles and the
//! physics ablation), prediction-quality metrics, and goal-suite handling.

mod metrics;
mod oracle;
mod prediction;
mod stacking;
mod suite;

pub use metrics::{tower_accuracy, MatchThresholds, ObjectError, TowerMatch};
pub use oracle::{OracleObjectScorer, OraclePixelScorer};
pub use prediction::{prediction_eval, reconstruction_vs_prediction, PredictionReport};
pub use stacking::{
    first_step_stats, run_baseline, EvalReport, FirstStepStats, GoalOutcome, KindReport,
    ModelKind, StackingParams,
};
pub use suite::{
    generate_goal_suite, goal_dir, read_goal_frame, read_goal_suite, write_goal_suite, GoalCase,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("model kind `{0}` requires a checkpoint")]
    MissingCheckpoint(&'static str),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("report: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),

    #[error("{0}")]
    Format(String),
}

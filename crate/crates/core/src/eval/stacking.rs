use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{tower_accuracy, MatchThresholds, TowerMatch};
use super::oracle::{OracleObjectScorer, OraclePixelScorer};
use super::suite::GoalCase;
use super::EvalError;
use crate::model::Nets;
use crate::nn::init::split_seed;
use crate::nn::{ParamSet, Real};
use crate::plan::{
    elite_indices, plan_and_execute, Action, ActionSampler, CemConfig, Embedder,
    LearnedScorer, StepTrace,
};
use crate::world::WorldCfg;

/// Planner variants under evaluation. All run the identical loop; only the
/// scoring/simulation inside differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// The full learned pipeline.
    Full,
    /// Physics replaced by the identity.
    NoPhysics,
    /// Ground-truth simulator, whole-image pixel loss.
    OraclePixels,
    /// Ground-truth simulator, per-goal-segment pixel loss.
    OracleObjects,
}

impl ModelKind {
    pub fn token(&self) -> &'static str {
        match self {
            ModelKind::Full => "o2p2",
            ModelKind::NoPhysics => "no-physics",
            ModelKind::OraclePixels => "oracle-pixels",
            ModelKind::OracleObjects => "oracle-objects",
        }
    }

    pub fn needs_checkpoint(&self) -> bool {
        matches!(self, ModelKind::Full | ModelKind::NoPhysics)
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "o2p2" => Ok(ModelKind::Full),
            "no-physics" => Ok(ModelKind::NoPhysics),
            "oracle-pixels" => Ok(ModelKind::OraclePixels),
            "oracle-objects" => Ok(ModelKind::OracleObjects),
            other => Err(format!(
                "unknown model kind `{other}` (expected o2p2, no-physics, oracle-pixels, oracle-objects)"
            )),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Shared evaluation inputs; learned kinds require the checkpoint pieces.
pub struct StackingParams<'a, R: Real> {
    pub cem: CemConfig,
    pub seed: u64,
    pub workers: usize,
    pub learned: Option<(&'a ParamSet<R>, &'a Nets)>,
    pub embedder: Option<&'a Embedder<R>>,
}

/// First-step physics-awareness numbers (learned kinds only): how much of
/// the elite score mass matched goals resting above the ground, and whether
/// the executed first action matched a ground-level goal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FirstStepStats {
    pub above_ground_elite_mass: f64,
    pub first_action_ground: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalOutcome {
    pub goal: usize,
    pub n_blocks: usize,
    pub pass: bool,
    pub sweep_passes: Vec<bool>,
    pub worst_position_err: f64,
    pub worst_hue_err: f64,
    pub shapes_ok: bool,
    pub first_step: Option<FirstStepStats>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: ModelKind,
    pub accuracy: f64,
    pub sweep_accuracy: Vec<f64>,
    pub goals: Vec<GoalOutcome>,
}

/// The serialized output of a stacking evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub cem: CemConfig,
    pub thresholds: MatchThresholds,
    pub sweep: Vec<MatchThresholds>,
    pub kinds: BTreeMap<String, KindReport>,
}

fn ground_level(goal: &GoalCase, index: usize) -> bool {
    (goal.scene.blocks[index].y - goal.scene.world.platform_top).abs() < 1e-6
}

/// Elite-mass statistics from the first planning step's sample record.
pub fn first_step_stats(goal: &GoalCase, step: &StepTrace, elite_frac: f64) -> FirstStepStats {
    let distances: Vec<f64> = step.samples.iter().map(|s| s.distance).collect();
    let count = ((distances.len() as f64 * elite_frac).ceil() as usize).clamp(1, distances.len());
    let elites = elite_indices(&distances, count);
    let above = elites
        .iter()
        .filter(|&&i| {
            distances[i].is_finite() && !ground_level(goal, step.samples[i].goal)
        })
        .count();
    FirstStepStats {
        above_ground_elite_mass: above as f64 / elites.len() as f64,
        first_action_ground: ground_level(goal, step.chosen.goal),
    }
}

fn summarize(
    goal: &GoalCase,
    matching: &TowerMatch,
    thresholds: &MatchThresholds,
    sweep: &[MatchThresholds],
    first_step: Option<FirstStepStats>,
    actions: Vec<Action>,
) -> GoalOutcome {
    GoalOutcome {
        goal: goal.index,
        n_blocks: goal.scene.blocks.len(),
        pass: matching.passes(thresholds),
        sweep_passes: sweep.iter().map(|t| matching.passes(t)).collect(),
        worst_position_err: matching
            .errors
            .iter()
            .map(|e| e.position_err)
            .fold(0.0, f64::max),
        worst_hue_err: matching.errors.iter().map(|e| e.hue_err).fold(0.0, f64::max),
        shapes_ok: matching.count_ok && matching.errors.iter().all(|e| e.shape_ok),
        first_step,
        actions,
    }
}

/// Runs one planner variant over the goal suite with the identical loop and
/// per-goal seeding, substituting only the scorer.
pub fn run_baseline<R: Real>(
    kind: ModelKind,
    goals: &[GoalCase],
    sp: &StackingParams<'_, R>,
    thresholds: &MatchThresholds,
    sweep: &[MatchThresholds],
) -> Result<KindReport, EvalError> {
    if kind.needs_checkpoint() && sp.learned.is_none() {
        return Err(EvalError::MissingCheckpoint(kind.token()));
    }
    let world = WorldCfg::default();
    let sampler = ActionSampler::all_shapes(world);
    let mut outcomes = Vec::with_capacity(goals.len());

    for goal in goals {
        let seed = split_seed(sp.seed, (goal.index as u64) << 8 | kind as u64);
        let (trace, first_step) = match kind {
            ModelKind::Full | ModelKind::NoPhysics => {
                let (params, nets) = sp.learned.expect("checked above");
                let mut scorer = LearnedScorer::from_goal_frame(params, nets, &goal.frame);
                scorer.use_physics = kind == ModelKind::Full;
                scorer.embedder = sp.embedder;
                scorer.workers = sp.workers;
                let trace = plan_and_execute(&scorer, &sampler, &sp.cem, seed, true);
                let stats = first_step_stats(goal, &trace.steps[0], sp.cem.elite_frac);
                (trace, Some(stats))
            }
            ModelKind::OraclePixels => {
                let scorer = OraclePixelScorer {
                    goal_image: &goal.frame.image,
                    goal_scene: &goal.scene,
                    workers: sp.workers,
                };
                (plan_and_execute(&scorer, &sampler, &sp.cem, seed, false), None)
            }
            ModelKind::OracleObjects => {
                let scorer = OracleObjectScorer {
                    goal_image: &goal.frame.image,
                    goal_masks: &goal.frame.segments,
                    goal_scene: &goal.scene,
                    workers: sp.workers,
                };
                (plan_and_execute(&scorer, &sampler, &sp.cem, seed, false), None)
            }
        };
        let matching = tower_accuracy(&trace.built, &goal.scene);
        outcomes.push(summarize(goal, &matching, thresholds, sweep, first_step, trace.actions));
    }

    let accuracy = 100.0 * outcomes.iter().filter(|o| o.pass).count() as f64
        / outcomes.len().max(1) as f64;
    let sweep_accuracy = (0..sweep.len())
        .map(|i| {
            100.0 * outcomes.iter().filter(|o| o.sweep_passes[i]).count() as f64
                / outcomes.len().max(1) as f64
        })
        .collect();
    Ok(KindReport {
        kind,
        accuracy,
        sweep_accuracy,
        goals: outcomes,
    })
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::action::{Action, ActionSampler};
use super::cem::{elite_indices, CemConfig, CemDistribution};
use super::score::{ActionScorer, SampleScore};
use crate::model::{
    composite, encode_segments, frame_segments, render_objects, simulate_physics, Nets,
};
use crate::nn::init::split_seed;
use crate::nn::{ParamSet, Real};
use crate::world::{background_frame, render_frame, settle, Scene, RESOLUTION};

/// Everything observed while planning one step, kept for score heatmaps and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub chosen: SampleScore,
    /// Scores of every sample across all CEM iterations.
    pub samples: Vec<SampleScore>,
}

/// The executed plan: one action per goal object, plus the resulting scene.
#[derive(Debug, Clone)]
pub struct PlanTrace {
    pub actions: Vec<Action>,
    pub built: Scene,
    pub steps: Vec<StepTrace>,
}

/// Runs CEM over one planning step: uniform first iteration, elites refit
/// the distribution afterwards. Returns the best sample seen anywhere plus
/// the full sample record.
pub fn cem_step(
    scorer: &dyn ActionScorer,
    sampler: &ActionSampler,
    cem: &CemConfig,
    current: &Scene,
    remaining: &[usize],
    seed: u64,
) -> StepTrace {
    let mut dist = CemDistribution::uniform();
    let mut all: Vec<SampleScore> = Vec::with_capacity(cem.iterations * cem.samples);
    let mut best: Option<SampleScore> = None;

    for iter in 0..cem.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0xce_0000 + iter as u64));
        let actions: Vec<Action> = (0..cem.samples).map(|_| dist.sample(sampler, &mut rng)).collect();
        let scores = scorer.score_batch(&actions, current, remaining);

        let distances: Vec<f64> = scores.iter().map(|s| s.distance).collect();
        let elites = elite_indices(&distances, cem.elite_count());
        let elite_actions: Vec<Action> = elites.iter().map(|&i| actions[i]).collect();
        dist = CemDistribution::fit(sampler, &elite_actions);

        for s in &scores {
            let better = match &best {
                None => true,
                Some(b) => s.distance < b.distance,
            };
            if better {
                best = Some(*s);
            }
        }
        all.extend(scores);
    }

    StepTrace {
        chosen: best.expect("at least one sample"),
        samples: all,
    }
}

/// The full construction loop: encode goals, then repeatedly sample, score,
/// execute the best action in the simulator, and retire its matched goal —
/// exactly one action per goal object.
pub fn plan_and_execute(
    scorer: &dyn ActionScorer,
    sampler: &ActionSampler,
    cem: &CemConfig,
    seed: u64,
    record_samples: bool,
) -> PlanTrace {
    let n_goals = scorer.n_goals();
    let mut remaining: Vec<usize> = (0..n_goals).collect();
    let mut scene = Scene {
        blocks: Vec::new(),
        world: sampler.world,
    };
    let mut actions = Vec::with_capacity(n_goals);
    let mut steps = Vec::with_capacity(n_goals);

    for step in 0..n_goals {
        let mut trace = cem_step(
            scorer,
            sampler,
            cem,
            &scene,
            &remaining,
            split_seed(seed, 0x57e9_0000 + step as u64),
        );
        let chosen = trace.chosen;
        actions.push(chosen.action);

        scene.blocks.push(chosen.action.block());
        scene = settle(&scene);
        remaining.retain(|&g| g != chosen.goal);

        if !record_samples {
            trace.samples.clear();
        }
        steps.push(trace);
    }

    PlanTrace {
        actions,
        built: scene,
        steps,
    }
}

/// Highest row (as a world height) at which the composite differs from the
/// fixed background by more than `threshold` in any channel.
pub fn predicted_top_height<R: Real>(
    composite_chw: &[R],
    background_chw: &[R],
    world_height: f64,
    threshold: f64,
) -> f64 {
    let res = RESOLUTION;
    let hw = res * res;
    for row in 0..res {
        for col in 0..res {
            let p = row * res + col;
            for c in 0..3 {
                let d = (composite_chw[c * hw + p].to_f64() - background_chw[c * hw + p].to_f64())
                    .abs();
                if d > threshold {
                    // Row top edge in world units.
                    return (res - row) as f64 * world_height / res as f64;
                }
            }
        }
    }
    0.0
}

/// Plans for the alternate goal of maximizing tower height: no goal image,
/// samples scored by the highest non-background pixels of the learned
/// renderer's composite after physics.
pub fn plan_max_height<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    budget: usize,
    sampler: &ActionSampler,
    cem: &CemConfig,
    seed: u64,
    workers: usize,
) -> PlanTrace {
    let world = sampler.world;
    let background = crate::model::image_chw::<R>(&background_frame(&world));
    let threshold = 0.15;

    let mut scene = Scene {
        blocks: Vec::new(),
        world,
    };
    let mut actions = Vec::with_capacity(budget);
    let mut steps = Vec::with_capacity(budget);

    for step in 0..budget {
        let current_segments = frame_segments::<R>(&render_frame(&scene));
        let score_one = |action: &Action| -> SampleScore {
            if !action.is_valid(&world) {
                return SampleScore {
                    action: *action,
                    goal: 0,
                    distance: f64::INFINITY,
                };
            }
            let frame = action.as_segment_frame(&world);
            let mut segs = current_segments.clone();
            segs.push(crate::model::segment_image(&frame.image, &frame.segments[0]));
            let objs = encode_segments(params, nets, &segs);
            let settled_objs = simulate_physics(params, nets, &objs);
            let (images, heats) = render_objects(params, nets, &settled_objs);
            let pred = composite(params, nets, &images, &heats, settled_objs.len());
            let top = predicted_top_height(&pred, &background, world.height, threshold);
            SampleScore {
                action: *action,
                goal: 0,
                distance: -top, // lower is better
            }
        };

        let mut dist = CemDistribution::uniform();
        let mut best: Option<SampleScore> = None;
        let mut all = Vec::with_capacity(cem.iterations * cem.samples);
        for iter in 0..cem.iterations {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(
                seed,
                0x8e19_0000 + (step * 31 + iter) as u64,
            ));
            let batch: Vec<Action> = (0..cem.samples).map(|_| dist.sample(sampler, &mut rng)).collect();
            let scores: Vec<SampleScore> = if workers > 1 {
                batch.par_iter().map(score_one).collect()
            } else {
                batch.iter().map(score_one).collect()
            };
            let distances: Vec<f64> = scores.iter().map(|s| s.distance).collect();
            let elites = elite_indices(&distances, cem.elite_count());
            let elite_actions: Vec<Action> = elites.iter().map(|&i| batch[i]).collect();
            dist = CemDistribution::fit(sampler, &elite_actions);
            for s in &scores {
                if best.map(|b| s.distance < b.distance).unwrap_or(true) {
                    best = Some(*s);
                }
            }
            all.extend(scores);
        }

        let chosen = best.expect("sampled at least once");
        actions.push(chosen.action);
        scene.blocks.push(chosen.action.block());
        scene = settle(&scene);
        steps.push(StepTrace {
            chosen,
            samples: all,
        });
    }

    PlanTrace {
        actions,
        built: scene,
        steps,
    }
}

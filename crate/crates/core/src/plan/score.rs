use rayon::prelude::*;

use super::action::Action;
use super::embedder::Embedder;
use crate::model::{
    encode_segments, frame_segments, l2_distance, segment_image, simulate_physics, Nets, ObjectSet,
};
use crate::nn::{ParamSet, Real};
use crate::world::{render_frame, Scene};

/// One evaluated sample: the action, the goal object it matched, and the
/// distance in object space (lower is better; invalid actions score
/// infinity).
#[derive(Debug, Clone, Copy)]
pub struct SampleScore {
    pub action: Action,
    pub goal: usize,
    pub distance: f64,
}

/// Anything that can score placement proposals against remaining goals.
/// `remaining` holds original goal indices still unmatched.
pub trait ActionScorer: Sync {
    fn n_goals(&self) -> usize;

    fn score_batch(
        &self,
        actions: &[Action],
        current: &Scene,
        remaining: &[usize],
    ) -> Vec<SampleScore>;
}

/// Scores actions in learned object space: observe the action as a segment
/// (or embed it directly), encode everything, run the physics predictor, and
/// match the placed object's settled vector to the nearest remaining goal.
pub struct LearnedScorer<'a, R: Real> {
    pub params: &'a ParamSet<R>,
    pub nets: &'a Nets,
    pub goals: ObjectSet<R>,
    /// `false` replaces the physics step with the identity (the ablation).
    pub use_physics: bool,
    /// Fast path mapping actions straight to object vectors.
    pub embedder: Option<&'a Embedder<R>>,
    /// Weight of the auxiliary pixel terms: the distance between the
    /// observed and rendered held segment plus the distance between the
    /// held object's renderings before and after physics (penalizing
    /// predicted movement). Zero disables them, the default in simulation.
    pub aux_pixel_weight: f64,
    pub workers: usize,
}

impl<'a, R: Real> LearnedScorer<'a, R> {
    pub fn new(params: &'a ParamSet<R>, nets: &'a Nets, goals: ObjectSet<R>) -> Self {
        LearnedScorer {
            params,
            nets,
            goals,
            use_physics: true,
            embedder: None,
            aux_pixel_weight: 0.0,
            workers: 1,
        }
    }

    /// Encodes the goal frame's segments into goal object vectors.
    pub fn from_goal_frame(
        params: &'a ParamSet<R>,
        nets: &'a Nets,
        goal: &crate::world::Frame,
    ) -> Self {
        let goals = encode_segments(params, nets, &frame_segments(goal));
        Self::new(params, nets, goals)
    }

    /// Pixel-space regularizers over the held object's renderings: distance
    /// between the observed segment and its pre-physics rendering, plus
    /// distance between the renderings before and after physics.
    fn aux_pixel_terms(
        &self,
        action: &Action,
        pre: &ObjectSet<R>,
        post: &ObjectSet<R>,
        placed: usize,
        world: &crate::world::WorldCfg,
    ) -> f64 {
        let one = ObjectSet::from_rows(self.nets.config.object_dim, pre.vec(placed).to_vec());
        let (img_pre, _) = crate::model::render_objects(self.params, self.nets, &one);
        let one_post = ObjectSet::from_rows(self.nets.config.object_dim, post.vec(placed).to_vec());
        let (img_post, _) = crate::model::render_objects(self.params, self.nets, &one_post);

        let frame = action.as_segment_frame(world);
        let observed = segment_image::<R>(&frame.image, &frame.segments[0]);

        let mse = |a: &[R], b: &[R]| -> f64 {
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b) {
                let d = x.to_f64() - y.to_f64();
                s += d * d;
            }
            s / a.len() as f64
        };
        mse(&img_pre, &observed) + mse(&img_pre, &img_post)
    }

    /// Object vectors for a batch of held actions, through the perception
    /// route or the embedder.
    fn held_vectors(&self, actions: &[Action], world: &crate::world::WorldCfg) -> ObjectSet<R> {
        if let Some(emb) = self.embedder {
            return emb.encode_batch(actions, world);
        }
        let encode_chunk = |chunk: &[Action]| -> Vec<Vec<R>> {
            let segs: Vec<Vec<R>> = chunk
                .iter()
                .map(|a| {
                    let frame = a.as_segment_frame(world);
                    segment_image(&frame.image, &frame.segments[0])
                })
                .collect();
            let objs = encode_segments(self.params, self.nets, &segs);
            (0..objs.len()).map(|k| objs.vec(k).to_vec()).collect()
        };
        let chunks: Vec<&[Action]> = actions.chunks(64).collect();
        let rows: Vec<Vec<Vec<R>>> = if self.workers > 1 {
            chunks.par_iter().map(|c| encode_chunk(c)).collect()
        } else {
            chunks.iter().map(|c| encode_chunk(c)).collect()
        };
        let mut out = ObjectSet::empty(self.nets.config.object_dim);
        for chunk in rows {
            for row in chunk {
                out.push(&row);
            }
        }
        out
    }
}

impl<R: Real> ActionScorer for LearnedScorer<'_, R> {
    fn n_goals(&self) -> usize {
        self.goals.len()
    }

    fn score_batch(
        &self,
        actions: &[Action],
        current: &Scene,
        remaining: &[usize],
    ) -> Vec<SampleScore> {
        assert!(!remaining.is_empty(), "no goals left to match");
        let world = current.world;
        // The standing scene is shared by every sample; encode it once.
        let current_frame = render_frame(current);
        let current_objs = encode_segments(self.params, self.nets, &frame_segments(&current_frame));
        let held = self.held_vectors(actions, &world);

        let score_one = |(i, action): (usize, &Action)| -> SampleScore {
            if !action.is_valid(&world) {
                return SampleScore {
                    action: *action,
                    goal: remaining[0],
                    distance: f64::INFINITY,
                };
            }
            let mut objs = ObjectSet::empty(self.nets.config.object_dim);
            for k in 0..current_objs.len() {
                objs.push(current_objs.vec(k));
            }
            objs.push(held.vec(i));
            let placed = objs.len() - 1;
            let settled = if self.use_physics {
                simulate_physics(self.params, self.nets, &objs)
            } else {
                objs.clone()
            };
            let mut best = (remaining[0], f64::INFINITY);
            for &g in remaining {
                let d = l2_distance(settled.vec(placed), self.goals.vec(g));
                if d < best.1 {
                    best = (g, d);
                }
            }
            let mut distance = best.1;
            if self.aux_pixel_weight > 0.0 {
                distance += self.aux_pixel_weight * self.aux_pixel_terms(action, &objs, &settled, placed, &world);
            }
            SampleScore {
                action: *action,
                goal: best.0,
                distance,
            }
        };

        if self.workers > 1 {
            actions.par_iter().enumerate().map(score_one).collect()
        } else {
            actions.iter().enumerate().map(score_one).collect()
        }
    }
}

/// Scores one action against the remaining goals. Pure in all of its
/// inputs, so repeated calls agree bit-exactly.
pub fn score_action<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    action: &Action,
    current: &Scene,
    goals: &ObjectSet<R>,
) -> SampleScore {
    let scorer = LearnedScorer {
        params,
        nets,
        goals: goals.clone(),
        use_physics: true,
        embedder: None,
        aux_pixel_weight: 0.0,
        workers: 1,
    };
    let remaining: Vec<usize> = (0..goals.len()).collect();
    scorer.score_batch(std::slice::from_ref(action), current, &remaining)[0]
}

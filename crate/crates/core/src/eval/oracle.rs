use rayon::prelude::*;

use crate::plan::{Action, ActionScorer, SampleScore};
use crate::world::{render_frame, settle, Image, Mask, Scene, RESOLUTION};

/// Ground-truth scoring in whole-image pixel space: settle the proposal in
/// the simulator, render, and take the L2 distance to the goal image. Goal
/// bookkeeping (which object to retire) matches the settled block to the
/// nearest remaining goal block by position, since pixel scores carry no
/// object identity.
pub struct OraclePixelScorer<'a> {
    pub goal_image: &'a Image,
    pub goal_scene: &'a Scene,
    pub workers: usize,
}

/// Ground-truth scoring constrained to one object: the proposal is compared
/// within the matched goal segment's mask joined with the placed block's own
/// rendered pixels, which sidesteps the pixel-loss failure mode of covering
/// several goal objects with one block. Scoring the goal mask alone would be
/// shape-blind — any wider block that happens to cover the mask in the right
/// color ties at zero — so the placed block's overhang must count against it.
pub struct OracleObjectScorer<'a> {
    pub goal_image: &'a Image,
    pub goal_masks: &'a [Mask],
    pub goal_scene: &'a Scene,
    pub workers: usize,
}

fn settled_placement(action: &Action, current: &Scene) -> (Scene, usize) {
    let mut scene = current.clone();
    scene.blocks.push(action.block());
    (settle(&scene), scene.blocks.len() - 1)
}

fn nearest_goal_by_position(scene: &Scene, placed: usize, goal: &Scene, remaining: &[usize]) -> usize {
    let (px, py) = scene.blocks[placed].center();
    let mut best = (remaining[0], f64::INFINITY);
    for &g in remaining {
        let (gx, gy) = goal.blocks[g].center();
        let d = ((px - gx).powi(2) + (py - gy).powi(2)).sqrt();
        if d < best.1 {
            best = (g, d);
        }
    }
    best.0
}

impl ActionScorer for OraclePixelScorer<'_> {
    fn n_goals(&self) -> usize {
        self.goal_scene.blocks.len()
    }

    fn score_batch(
        &self,
        actions: &[Action],
        current: &Scene,
        remaining: &[usize],
    ) -> Vec<SampleScore> {
        let world = current.world;
        let one = |action: &Action| -> SampleScore {
            if !action.is_valid(&world) {
                return SampleScore { action: *action, goal: remaining[0], distance: f64::INFINITY };
            }
            let (scene, placed) = settled_placement(action, current);
            let img = render_frame(&scene).image;
            let d = img.mse(self.goal_image);
            let goal = nearest_goal_by_position(&scene, placed, self.goal_scene, remaining);
            SampleScore { action: *action, goal, distance: d }
        };
        if self.workers > 1 {
            actions.par_iter().map(one).collect()
        } else {
            actions.iter().map(one).collect()
        }
    }
}

/// Mean squared pixel difference inside the union of two masks.
fn masked_mse(a: &Image, b: &Image, mask: &Mask, extra: &Mask) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for p in 0..RESOLUTION * RESOLUTION {
        if mask[p] || extra[p] {
            for c in 0..3 {
                let d = (a.pixels[p * 3 + c] - b.pixels[p * 3 + c]) as f64;
                s += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl ActionScorer for OracleObjectScorer<'_> {
    fn n_goals(&self) -> usize {
        self.goal_scene.blocks.len()
    }

    fn score_batch(
        &self,
        actions: &[Action],
        current: &Scene,
        remaining: &[usize],
    ) -> Vec<SampleScore> {
        let world = current.world;
        let one = |action: &Action| -> SampleScore {
            if !action.is_valid(&world) {
                return SampleScore { action: *action, goal: remaining[0], distance: f64::INFINITY };
            }
            let (scene, placed) = settled_placement(action, current);
            let frame = render_frame(&scene);
            let placed_mask = &frame.segments[placed];
            let mut best = (remaining[0], f64::INFINITY);
            for &g in remaining {
                let d = masked_mse(&frame.image, self.goal_image, &self.goal_masks[g], placed_mask);
                if d < best.1 {
                    best = (g, d);
                }
            }
            SampleScore { action: *action, goal: best.0, distance: best.1 }
        };
        if self.workers > 1 {
            actions.par_iter().map(one).collect()
        } else {
            actions.iter().map(one).collect()
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::world::{hue_distance, Scene};

/// Pass thresholds for one rebuilt object. Shape (including orientation) is
/// compared categorically; position error is the Euclidean distance between
/// bounding-box centers; hue error is circular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchThresholds {
    pub position: f64,
    pub hue: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        MatchThresholds {
            position: 0.5,
            hue: 0.1,
        }
    }
}

impl MatchThresholds {
    /// The sweep used by the acceptance checks: strictly widening bounds.
    pub fn sweep() -> Vec<MatchThresholds> {
        vec![
            MatchThresholds { position: 0.25, hue: 0.05 },
            MatchThresholds { position: 0.375, hue: 0.075 },
            MatchThresholds { position: 0.5, hue: 0.1 },
            MatchThresholds { position: 0.75, hue: 0.15 },
            MatchThresholds { position: 1.0, hue: 0.2 },
        ]
    }
}

/// Errors of one goal object against its greedily matched built object.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectError {
    pub goal_index: usize,
    pub built_index: usize,
    pub position_err: f64,
    pub hue_err: f64,
    pub shape_ok: bool,
}

impl ObjectError {
    pub fn passes(&self, thr: &MatchThresholds) -> bool {
        self.shape_ok && self.position_err <= thr.position && self.hue_err <= thr.hue
    }
}

/// Outcome of matching a built scene against a goal scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerMatch {
    pub count_ok: bool,
    pub errors: Vec<ObjectError>,
}

impl TowerMatch {
    pub fn passes(&self, thr: &MatchThresholds) -> bool {
        self.count_ok && self.errors.iter().all(|e| e.passes(thr))
    }
}

/// Greedy matching of built blocks to goal blocks: goal objects are visited
/// top first, each taking its nearest unmatched built block by position.
/// The matching itself never looks at the thresholds, so loosening them can
/// only turn failures into passes.
pub fn tower_accuracy(built: &Scene, goal: &Scene) -> TowerMatch {
    let count_ok = built.blocks.len() == goal.blocks.len();

    let mut goal_order: Vec<usize> = (0..goal.blocks.len()).collect();
    goal_order.sort_by(|&a, &b| {
        goal.blocks[b]
            .y
            .total_cmp(&goal.blocks[a].y)
            .then(a.cmp(&b))
    });

    let mut taken = vec![false; built.blocks.len()];
    let mut errors = Vec::with_capacity(goal.blocks.len());
    for g in goal_order {
        let gb = &goal.blocks[g];
        let (gx, gy) = gb.center();
        let mut best: Option<(usize, f64)> = None;
        for (i, bb) in built.blocks.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let (bx, by) = bb.center();
            let d = ((bx - gx).powi(2) + (by - gy).powi(2)).sqrt();
            if best.map(|(_, bd)| d < bd).unwrap_or(true) {
                best = Some((i, d));
            }
        }
        let Some((i, d)) = best else { break };
        taken[i] = true;
        let bb = &built.blocks[i];
        errors.push(ObjectError {
            goal_index: g,
            built_index: i,
            position_err: d,
            hue_err: hue_distance(bb.hue, gb.hue),
            shape_ok: bb.shape == gb.shape && bb.orientation == gb.orientation,
        });
    }
    TowerMatch { count_ok, errors }
}

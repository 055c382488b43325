use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{Action, ActionSampler};
use crate::world::{Block, BlockShape, Orientation};

/// Cross-entropy refinement settings. Iteration one samples uniformly; each
/// later iteration samples from a distribution fit to the previous elites.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CemConfig {
    pub iterations: usize,
    pub samples: usize,
    pub elite_frac: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            iterations: 5,
            samples: 1000,
            elite_frac: 0.10,
        }
    }
}

impl CemConfig {
    pub fn elite_count(&self) -> usize {
        ((self.samples as f64 * self.elite_frac).ceil() as usize)
            .clamp(1, self.samples)
    }
}

const PROB_FLOOR: f64 = 0.02;
const STD_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
struct Gauss {
    mean: f64,
    std: f64,
}

impl Gauss {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller from two uniform draws.
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        self.mean + self.std * z
    }

    fn fit(values: impl Iterator<Item = f64> + Clone) -> Gauss {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Gauss {
            mean,
            // A degenerate elite set would collapse the distribution; the
            // floor keeps later iterations alive.
            std: var.sqrt().max(STD_FLOOR),
        }
    }
}

/// The sampling distribution: categorical over shape and orientation,
/// diagonal Gaussians over the continuous dimensions.
#[derive(Debug, Clone)]
pub struct CemDistribution {
    uniform: bool,
    shape_p: Vec<f64>,
    orient_deg90_p: f64,
    x: Gauss,
    drop_h: Gauss,
    hue: Gauss,
}

impl CemDistribution {
    pub fn uniform() -> Self {
        CemDistribution {
            uniform: true,
            shape_p: Vec::new(),
            orient_deg90_p: 0.5,
            x: Gauss { mean: 0.0, std: 1.0 },
            drop_h: Gauss { mean: 0.0, std: 1.0 },
            hue: Gauss { mean: 0.0, std: 1.0 },
        }
    }

    pub fn sample(&self, sampler: &ActionSampler, rng: &mut ChaCha8Rng) -> Action {
        if self.uniform {
            return sampler.sample_uniform(rng);
        }
        let roll: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut shape = sampler.shapes[0];
        for (i, &p) in self.shape_p.iter().enumerate() {
            acc += p;
            if roll < acc {
                shape = sampler.shapes[i];
                break;
            }
        }
        let orientation = if shape == BlockShape::Rect
            && rng.random_range(0.0..1.0) < self.orient_deg90_p
        {
            Orientation::Deg90
        } else {
            Orientation::Deg0
        };
        let probe = Block::new(shape, 0.0, 0.0, orientation, 0.0);
        let hw = probe.width() / 2.0;
        let h = probe.height();
        let world = &sampler.world;
        Action {
            shape,
            x: self.x.sample(rng).clamp(hw, world.width - hw),
            drop_h: self
                .drop_h
                .sample(rng)
                .clamp(world.platform_top, world.height - h),
            orientation,
            hue: self.hue.sample(rng).rem_euclid(1.0),
        }
    }

    /// Refits to the elite set: empirical frequencies for the categorical
    /// dimensions (with a small floor), moment-matched Gaussians for the
    /// continuous ones.
    pub fn fit(sampler: &ActionSampler, elites: &[Action]) -> Self {
        let n = elites.len().max(1) as f64;
        let mut shape_p: Vec<f64> = sampler
            .shapes
            .iter()
            .map(|&s| elites.iter().filter(|a| a.shape == s).count() as f64 / n + PROB_FLOOR)
            .collect();
        let z: f64 = shape_p.iter().sum();
        for p in shape_p.iter_mut() {
            *p /= z;
        }
        let rects = elites.iter().filter(|a| a.shape == BlockShape::Rect).count();
        let orient_deg90_p = if rects > 0 {
            (elites
                .iter()
                .filter(|a| a.shape == BlockShape::Rect && a.orientation == Orientation::Deg90)
                .count() as f64
                / rects as f64)
                .clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
        } else {
            0.5
        };
        CemDistribution {
            uniform: false,
            shape_p,
            orient_deg90_p,
            x: Gauss::fit(elites.iter().map(|a| a.x)),
            drop_h: Gauss::fit(elites.iter().map(|a| a.drop_h)),
            hue: Gauss::fit(elites.iter().map(|a| a.hue)),
        }
    }
}

/// Indices of the `count` lowest-scoring samples (ties broken by index, so
/// replays are exact).
pub fn elite_indices(distances: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::world::{render_frame, Block, BlockShape, Frame, Orientation, Scene, WorldCfg};

/// One placement proposal: which block to spawn, where to release it, and
/// its color. `x` is the footprint center, `drop_h` the release height of
/// the block's bottom edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub shape: BlockShape,
    pub x: f64,
    pub drop_h: f64,
    pub orientation: Orientation,
    pub hue: f64,
}

impl Action {
    pub fn block(&self) -> Block {
        Block::new(self.shape, self.x, self.drop_h, self.orientation, self.hue)
    }

    /// Within world bounds, with rotation only on rects.
    pub fn is_valid(&self, world: &WorldCfg) -> bool {
        let b = self.block();
        if self.orientation == Orientation::Deg90 && self.shape != BlockShape::Rect {
            return false;
        }
        let hw = b.width() / 2.0;
        self.x >= hw - 1e-9
            && self.x <= world.width - hw + 1e-9
            && self.drop_h >= world.platform_top - 1e-9
            && self.drop_h <= world.height - b.height() + 1e-9
            && self.hue.is_finite()
            && self.x.is_finite()
            && self.drop_h.is_finite()
    }

    /// Observes the action as a segment: the held block rendered alone at
    /// its release pose. The mask is the block's visible pixels.
    pub fn as_segment_frame(&self, world: &WorldCfg) -> Frame {
        render_frame(&Scene {
            blocks: vec![self.block()],
            world: *world,
        })
    }

    /// Numeric encoding fed to the embedder: one-hot shape, normalized
    /// position, one-hot orientation, and the hue on the unit circle.
    pub fn encoding(&self, world: &WorldCfg) -> Vec<f64> {
        let mut v = vec![0.0; Self::ENCODING_DIM];
        v[match self.shape {
            BlockShape::Cube => 0,
            BlockShape::Rect => 1,
            BlockShape::Triangle => 2,
        }] = 1.0;
        v[3] = self.x / world.width;
        v[4] = self.drop_h / world.height;
        v[5 + matches!(self.orientation, Orientation::Deg90) as usize] = 1.0;
        let angle = self.hue * std::f64::consts::TAU;
        v[7] = angle.cos();
        v[8] = angle.sin();
        v
    }

    pub const ENCODING_DIM: usize = 9;
}

/// Uniform action distribution over a shape palette and the valid pose box.
#[derive(Debug, Clone)]
pub struct ActionSampler {
    pub shapes: Vec<BlockShape>,
    pub world: WorldCfg,
}

impl ActionSampler {
    pub fn all_shapes(world: WorldCfg) -> Self {
        ActionSampler {
            shapes: BlockShape::ALL.to_vec(),
            world,
        }
    }

    pub fn cubes_only(world: WorldCfg) -> Self {
        ActionSampler {
            shapes: vec![BlockShape::Cube],
            world,
        }
    }

    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Action {
        let shape = self.shapes[rng.random_range(0..self.shapes.len())];
        let orientation = if shape == BlockShape::Rect && rng.random_range(0..2) == 1 {
            Orientation::Deg90
        } else {
            Orientation::Deg0
        };
        let probe = Block::new(shape, 0.0, 0.0, orientation, 0.0);
        let hw = probe.width() / 2.0;
        let h = probe.height();
        Action {
            shape,
            x: rng.random_range(hw..self.world.width - hw),
            drop_h: rng.random_range(self.world.platform_top..self.world.height - h),
            orientation,
            hue: rng.random_range(0.0..1.0),
        }
    }
}

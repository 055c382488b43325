use serde::{Deserialize, Serialize};

/// Block archetypes. Footprints are in world units: cubes are 1×1, rects
/// 2×1 (1×2 when rotated), triangles are right-isoceles roofs with a unit
/// base and an apex-centered top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockShape {
    Cube,
    Rect,
    Triangle,
}

impl BlockShape {
    pub const ALL: [BlockShape; 3] = [BlockShape::Cube, BlockShape::Rect, BlockShape::Triangle];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "0")]
    Deg0,
    #[serde(rename = "90")]
    Deg90,
}

/// One rigid block. `x` is the footprint center, `y` the bottom edge; both
/// are continuous. Hue is in [0,1) with fixed saturation/value at raster
/// time. A 90° orientation is only meaningful for rects, where it swaps the
/// footprint from 2×1 to 1×2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub shape: BlockShape,
    pub x: f64,
    pub y: f64,
    pub orientation: Orientation,
    pub hue: f64,
}

pub const TRIANGLE_HEIGHT: f64 = 0.5;

impl Block {
    pub fn new(shape: BlockShape, x: f64, y: f64, orientation: Orientation, hue: f64) -> Self {
        Block { shape, x, y, orientation, hue }
    }

    pub fn width(&self) -> f64 {
        match (self.shape, self.orientation) {
            (BlockShape::Cube, _) => 1.0,
            (BlockShape::Rect, Orientation::Deg0) => 2.0,
            (BlockShape::Rect, Orientation::Deg90) => 1.0,
            (BlockShape::Triangle, _) => 1.0,
        }
    }

    pub fn height(&self) -> f64 {
        match (self.shape, self.orientation) {
            (BlockShape::Cube, _) => 1.0,
            (BlockShape::Rect, Orientation::Deg0) => 1.0,
            (BlockShape::Rect, Orientation::Deg90) => 2.0,
            (BlockShape::Triangle, _) => TRIANGLE_HEIGHT,
        }
    }

    pub fn left(&self) -> f64 {
        self.x - self.width() / 2.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.width() / 2.0
    }

    pub fn top(&self) -> f64 {
        self.y + self.height()
    }

    /// Center of the bounding box; the position used by the match metric.
    pub fn center(&self) -> (f64, f64) {
        (self.x, self.y + self.height() / 2.0)
    }

    /// Horizontal interval shared with another block's footprint.
    pub fn overlap_x(&self, other: &Block) -> f64 {
        (self.right().min(other.right()) - self.left().max(other.left())).max(0.0)
    }

    /// True if the axis-aligned bounding boxes share area.
    pub fn intersects(&self, other: &Block) -> bool {
        self.overlap_x(other) > 1e-9
            && self.y < other.top() - 1e-9
            && other.y < self.top() - 1e-9
    }
}

/// World geometry. The platform is part of the fixed background: it spans
/// the full width and blocks rest on its top surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldCfg {
    pub width: f64,
    pub height: f64,
    pub platform_top: f64,
}

impl Default for WorldCfg {
    fn default() -> Self {
        WorldCfg {
            width: 8.0,
            height: 8.0,
            platform_top: 0.5,
        }
    }
}

/// Ground-truth world state: an ordered list of blocks plus geometry.
/// Indices are stable through settling, so a block keeps its identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub blocks: Vec<Block>,
    pub world: WorldCfg,
}

impl Default for Scene {
    fn default() -> Self {
        Scene::empty()
    }
}

impl Scene {
    pub fn empty() -> Self {
        Scene {
            blocks: Vec::new(),
            world: WorldCfg::default(),
        }
    }

    pub fn with_blocks(blocks: Vec<Block>) -> Self {
        Scene {
            blocks,
            world: WorldCfg::default(),
        }
    }

    pub fn max_top(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.top())
            .fold(self.world.platform_top, f64::max)
    }

    /// True if any two blocks share bounding-box area.
    pub fn has_overlap(&self) -> bool {
        for i in 0..self.blocks.len() {
            for j in i + 1..self.blocks.len() {
                if self.blocks[i].intersects(&self.blocks[j]) {
                    return true;
                }
            }
        }
        false
    }
}

/// Fixed-saturation, fixed-value hue ramp used for block colors.
pub fn hue_to_rgb(hue: f64) -> [f32; 3] {
    hsv_to_rgb(hue.rem_euclid(1.0), 0.75, 0.9)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h6 = h * 6.0;
    let i = (h6.floor() as i64).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// Circular distance between two hues in [0,1).
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

//! Flat-shaded rasterization of scenes to RGB frames with per-block
//! visible-region masks.

use super::block::{hue_to_rgb, Block, BlockShape, Scene, TRIANGLE_HEIGHT};

/// Image side length in pixels.
pub const RESOLUTION: usize = 64;

pub const BACKGROUND: [f32; 3] = [0.10, 0.10, 0.12];
pub const PLATFORM_COLOR: [f32; 3] = [0.42, 0.40, 0.38];

/// RGB image stored row-major, row 0 at the top, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub pixels: Vec<f32>, // len = RESOLUTION * RESOLUTION * 3
}

impl Image {
    pub fn filled(color: [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(RESOLUTION * RESOLUTION * 3);
        for _ in 0..RESOLUTION * RESOLUTION {
            pixels.extend_from_slice(&color);
        }
        Image { pixels }
    }

    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * RESOLUTION + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, color: [f32; 3]) {
        let i = (row * RESOLUTION + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// Mean squared difference over all channels.
    pub fn mse(&self, other: &Image) -> f64 {
        let n = self.pixels.len();
        let mut s = 0.0f64;
        for i in 0..n {
            let d = (self.pixels[i] - other.pixels[i]) as f64;
            s += d * d;
        }
        s / n as f64
    }
}

/// Boolean pixel mask at frame resolution.
pub type Mask = Vec<bool>;

/// A rendered observation: the composite image plus one visible-region mask
/// per block, in scene order. Masks are pairwise disjoint; occlusion goes to
/// the later block in the scene list.
#[derive(Debug, Clone)]
pub struct Frame {
    pub image: Image,
    pub segments: Vec<Mask>,
}

impl Frame {
    /// Pixels where a masked segment would be nonzero, i.e. any block pixel.
    pub fn block_pixel_count(&self) -> usize {
        let mut n = 0;
        for p in 0..RESOLUTION * RESOLUTION {
            if self.segments.iter().any(|m| m[p]) {
                n += 1;
            }
        }
        n
    }
}

fn inside(block: &Block, wx: f64, wy: f64) -> bool {
    if wy < block.y || wy >= block.top() {
        return false;
    }
    match block.shape {
        BlockShape::Cube | BlockShape::Rect => wx >= block.left() && wx < block.right(),
        BlockShape::Triangle => {
            let t = (wy - block.y) / TRIANGLE_HEIGHT;
            let half = (1.0 - t) * block.width() / 2.0;
            let dx = wx - block.x;
            dx >= -half && dx < half
        }
    }
}

/// Rasterizes a scene. The fixed background (backdrop plus platform) is
/// identical for every scene; blocks draw over it in list order, so a
/// pixel's mask bit belongs to the last block covering it.
pub fn render_frame(scene: &Scene) -> Frame {
    let res = RESOLUTION;
    let sx = scene.world.width / res as f64;
    let sy = scene.world.height / res as f64;

    let mut image = Image::filled(BACKGROUND);
    // Platform rows.
    for row in 0..res {
        let wy = (res - 1 - row) as f64 * sy + sy / 2.0;
        if wy < scene.world.platform_top {
            for col in 0..res {
                image.set(row, col, PLATFORM_COLOR);
            }
        }
    }

    let mut owner: Vec<i32> = vec![-1; res * res];
    for (idx, block) in scene.blocks.iter().enumerate() {
        let color = hue_to_rgb(block.hue);
        // Bounding box in pixel coordinates, clamped to the frame.
        let col_lo = ((block.left() / sx - 1.0).floor().max(0.0)) as usize;
        let col_hi = ((block.right() / sx + 1.0).ceil().min(res as f64)) as usize;
        let row_lo = (((scene.world.height - block.top()) / sy - 1.0).floor().max(0.0)) as usize;
        let row_hi = (((scene.world.height - block.y) / sy + 1.0).ceil().min(res as f64)) as usize;
        for row in row_lo..row_hi {
            let wy = (res - 1 - row) as f64 * sy + sy / 2.0;
            for col in col_lo..col_hi {
                let wx = col as f64 * sx + sx / 2.0;
                if inside(block, wx, wy) {
                    image.set(row, col, color);
                    owner[row * res + col] = idx as i32;
                }
            }
        }
    }

    let segments = (0..scene.blocks.len())
        .map(|idx| owner.iter().map(|&o| o == idx as i32).collect())
        .collect();
    Frame { image, segments }
}

/// The constant empty-scene image (backdrop plus platform).
pub fn background_frame(scene_world: &super::block::WorldCfg) -> Image {
    render_frame(&Scene {
        blocks: Vec::new(),
        world: *scene_world,
    })
    .image
}

/// Converts an image to interleaved 8-bit RGB for PNG export.
pub fn to_rgb8(image: &Image) -> Vec<u8> {
    image
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Reads an interleaved 8-bit RGB buffer back to floats.
pub fn from_rgb8(bytes: &[u8]) -> Image {
    Image {
        pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
    }
}

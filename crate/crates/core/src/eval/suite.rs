use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::nn::init::split_seed;
use crate::world::{
    hue_distance, render_frame, settle, to_rgb8, Block, BlockShape, Frame, Orientation, Scene,
    WorldCfg, RESOLUTION,
};

/// One held-out goal tower: the ground-truth scene plus its rendered frame
/// (the planner only ever sees the frame).
#[derive(Debug, Clone)]
pub struct GoalCase {
    pub index: usize,
    pub scene: Scene,
    pub frame: Frame,
}

#[derive(Debug, Serialize, Deserialize)]
struct GoalMeta {
    index: usize,
    seed: u64,
    blocks: Vec<Block>,
}

const MIN_HUE_GAP: f64 = 0.22;

fn sample_tower(rng: &mut ChaCha8Rng, n_blocks: usize, world: &WorldCfg) -> Option<Scene> {
    let x0 = rng.random_range(1.5..world.width - 1.5);
    let mut hues: Vec<f64> = Vec::with_capacity(n_blocks);
    'hues: for _ in 0..n_blocks {
        for _ in 0..60 {
            let h = rng.random_range(0.0..1.0);
            if hues.iter().all(|&u| hue_distance(u, h) >= MIN_HUE_GAP) {
                hues.push(h);
                continue 'hues;
            }
        }
        return None;
    }

    let mut scene = Scene {
        blocks: Vec::new(),
        world: *world,
    };
    for (i, &hue) in hues.iter().enumerate() {
        let last = i == n_blocks - 1;
        // Triangles only ever top a tower; nothing can rest on an apex.
        let shape = if last && rng.random_range(0..4) == 0 {
            BlockShape::Triangle
        } else if rng.random_range(0..3) == 0 {
            BlockShape::Rect
        } else {
            BlockShape::Cube
        };
        let orientation = if shape == BlockShape::Rect && rng.random_range(0..3) == 0 {
            Orientation::Deg90
        } else {
            Orientation::Deg0
        };
        let mut b = Block::new(shape, 0.0, 0.0, orientation, hue);
        let jitter = rng.random_range(-0.2..0.2);
        let hw = b.width() / 2.0;
        b.x = (x0 + jitter).clamp(hw, world.width - hw);
        b.y = world.height - b.height();
        scene.blocks.push(b);
        scene = settle(&scene);
    }

    // Keep only stable multi-level towers that did not shed blocks.
    let grounded = scene
        .blocks
        .iter()
        .filter(|b| (b.y - world.platform_top).abs() < 1e-9)
        .count();
    let levels = scene
        .blocks
        .iter()
        .filter(|b| b.y > world.platform_top + 1e-9)
        .count();
    if levels == 0 || grounded > n_blocks.div_ceil(2) {
        return None;
    }
    if settle(&scene) != scene {
        return None;
    }
    Some(scene)
}

/// Deterministically generates `count` goal towers of 2–4 blocks. Sizes are
/// drawn as 2 blocks ~12%, 3 and 4 blocks ~44% each; hues within a tower are
/// well separated so the color threshold is meaningful.
pub fn generate_goal_suite(count: usize, seed: u64) -> Vec<GoalCase> {
    let world = WorldCfg::default();
    (0..count)
        .map(|index| {
            let mut attempt = 0u64;
            loop {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(split_seed(seed, (index as u64) << 16 | attempt));
                let n = match rng.random_range(0..100) {
                    0..12 => 2,
                    12..56 => 3,
                    _ => 4,
                };
                if let Some(scene) = sample_tower(&mut rng, n, &world) {
                    let frame = render_frame(&scene);
                    return GoalCase { index, scene, frame };
                }
                attempt += 1;
            }
        })
        .collect()
}

pub fn goal_dir(root: &Path, index: usize) -> PathBuf {
    root.join("goals").join(format!("{index:03}"))
}

/// Writes a goal suite: `goals/NNN/{goal.png, segments/K.png, meta.json}`.
pub fn write_goal_suite(root: &Path, goals: &[GoalCase], seed: u64) -> Result<(), EvalError> {
    for case in goals {
        let dir = goal_dir(root, case.index);
        let seg_dir = dir.join("segments");
        fs::create_dir_all(&seg_dir)?;
        let img = RgbImage::from_raw(
            RESOLUTION as u32,
            RESOLUTION as u32,
            to_rgb8(&case.frame.image),
        )
        .expect("raster size");
        img.save(dir.join("goal.png"))?;
        for (k, mask) in case.frame.segments.iter().enumerate() {
            let bytes: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
            GrayImage::from_raw(RESOLUTION as u32, RESOLUTION as u32, bytes)
                .expect("mask size")
                .save(seg_dir.join(format!("{k}.png")))?;
        }
        let meta = GoalMeta {
            index: case.index,
            seed,
            blocks: case.scene.blocks.clone(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    }
    Ok(())
}

/// Reads one goal directory's observation (image plus segment masks). The
/// planner needs nothing else; ground-truth metadata stays optional.
pub fn read_goal_frame(dir: &Path) -> Result<Frame, EvalError> {
    let img = image::open(dir.join("goal.png"))?.to_rgb8();
    let image = crate::world::from_rgb8(img.as_raw());
    let seg_dir = dir.join("segments");
    let mut ks: Vec<usize> = Vec::new();
    for entry in fs::read_dir(&seg_dir)? {
        let name = entry?.file_name();
        if let Some(k) = name.to_string_lossy().strip_suffix(".png").and_then(|s| s.parse().ok())
        {
            ks.push(k);
        }
    }
    ks.sort();
    let mut segments = Vec::with_capacity(ks.len());
    for k in ks {
        let m = image::open(seg_dir.join(format!("{k}.png")))?.to_luma8();
        segments.push(m.as_raw().iter().map(|&b| b >= 128).collect());
    }
    if segments.is_empty() {
        return Err(EvalError::Format(format!(
            "{}: goal has no segments",
            dir.display()
        )));
    }
    Ok(Frame { image, segments })
}

/// Reads a goal suite written by [`write_goal_suite`].
pub fn read_goal_suite(root: &Path) -> Result<Vec<GoalCase>, EvalError> {
    let goals_dir = root.join("goals");
    let mut indices: Vec<usize> = Vec::new();
    for entry in fs::read_dir(&goals_dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            if let Ok(i) = entry.file_name().to_string_lossy().parse::<usize>() {
                indices.push(i);
            }
        }
    }
    indices.sort();
    let mut out = Vec::with_capacity(indices.len());
    for index in indices {
        let dir = goal_dir(root, index);
        let meta: GoalMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let scene = Scene::with_blocks(meta.blocks);
        let img = image::open(dir.join("goal.png"))?.to_rgb8();
        let image = crate::world::from_rgb8(img.as_raw());
        let mut segments = Vec::with_capacity(scene.blocks.len());
        for k in 0..scene.blocks.len() {
            let m = image::open(dir.join("segments").join(format!("{k}.png")))?.to_luma8();
            segments.push(m.as_raw().iter().map(|&b| b >= 128).collect());
        }
        out.push(GoalCase {
            index,
            scene,
            frame: Frame { image, segments },
        });
    }
    Ok(out)
}

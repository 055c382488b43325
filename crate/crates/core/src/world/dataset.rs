//! Training-pair generation and the on-disk dataset layout:
//! `pairs/NNNNNN/{frame0.png, frame1.png, segments0/K.png, meta.json}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::block::{Block, BlockShape, Orientation, Scene, WorldCfg};
use super::error::WorldError;
use super::raster::{from_rgb8, render_frame, to_rgb8, Frame, Mask, RESOLUTION};
use super::settle::settle;
use crate::nn::init::split_seed;

/// A before/after supervision pair: `frame0` shows settled blocks plus one
/// block held at its sampled drop pose, `frame1` is the render of settling
/// that scene. The held block is always the last entry of `scene0`.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub index: u64,
    pub scene0: Scene,
    pub scene1: Scene,
    pub frame0: Frame,
    pub frame1: Frame,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenConfig {
    /// Maximum number of pre-settled blocks; the count is uniform on
    /// 0..=max_pre.
    pub max_pre: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_pre: 4 }
    }
}

/// Samples a block with uniform shape, orientation (rects only), hue, and
/// horizontal position; `y` is left at zero for the caller to choose.
pub fn sample_block(rng: &mut ChaCha8Rng, world: &WorldCfg) -> Block {
    let shape = BlockShape::ALL[rng.random_range(0..BlockShape::ALL.len())];
    let orientation = if shape == BlockShape::Rect && rng.random_range(0..2) == 1 {
        Orientation::Deg90
    } else {
        Orientation::Deg0
    };
    let mut b = Block::new(shape, 0.0, 0.0, orientation, rng.random_range(0.0..1.0));
    let hw = b.width() / 2.0;
    b.x = rng.random_range(hw..world.width - hw);
    b
}

/// Samples the before/after scenes for pair `index` without rasterizing.
/// The pair seed depends only on (seed, index), so generation may be
/// sharded freely.
pub fn generate_scenes(seed: u64, index: u64, cfg: &GenConfig) -> (Scene, Scene) {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, index));
    let world = WorldCfg::default();

    let n_pre = rng.random_range(0..=cfg.max_pre);
    let mut pre = Vec::with_capacity(n_pre);
    for _ in 0..n_pre {
        let mut b = sample_block(&mut rng, &world);
        b.y = world.height - b.height(); // drop from the top of the world
        pre.push(b);
    }
    let settled_pre = settle(&Scene { blocks: pre, world });

    // The held block's drop height spans the full range, so release poses
    // that intersect the standing scene (and therefore slide off) appear in
    // the training data.
    let mut held = sample_block(&mut rng, &world);
    held.y = rng.random_range(world.platform_top..world.height - held.height());

    let mut blocks0 = settled_pre.blocks;
    blocks0.push(held);
    let scene0 = Scene { blocks: blocks0, world };
    let scene1 = settle(&scene0);
    (scene0, scene1)
}

/// Deterministically generates pair `index` of a dataset stream.
pub fn generate_pair(seed: u64, index: u64, cfg: &GenConfig) -> TrainingPair {
    let (scene0, scene1) = generate_scenes(seed, index, cfg);
    let frame0 = render_frame(&scene0);
    let frame1 = render_frame(&scene1);
    TrainingPair { index, scene0, scene1, frame0, frame1 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMeta {
    pub index: u64,
    pub seed: u64,
    pub frame0_blocks: Vec<Block>,
    pub frame1_blocks: Vec<Block>,
}

pub fn pair_dir(root: &Path, index: u64) -> PathBuf {
    root.join("pairs").join(format!("{index:06}"))
}

fn save_rgb(path: &Path, image: &super::raster::Image) -> Result<(), WorldError> {
    let img = RgbImage::from_raw(RESOLUTION as u32, RESOLUTION as u32, to_rgb8(image))
        .expect("raster buffer matches resolution");
    img.save(path)?;
    Ok(())
}

fn save_mask(path: &Path, mask: &Mask) -> Result<(), WorldError> {
    let bytes: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(RESOLUTION as u32, RESOLUTION as u32, bytes)
        .expect("mask buffer matches resolution");
    img.save(path)?;
    Ok(())
}

fn load_rgb(path: &Path) -> Result<super::raster::Image, WorldError> {
    let img = image::open(path)?.to_rgb8();
    if img.width() as usize != RESOLUTION || img.height() as usize != RESOLUTION {
        return Err(WorldError::Format(format!(
            "{}: expected {RESOLUTION}x{RESOLUTION}",
            path.display()
        )));
    }
    Ok(from_rgb8(img.as_raw()))
}

fn load_mask(path: &Path) -> Result<Mask, WorldError> {
    let img = image::open(path)?.to_luma8();
    Ok(img.as_raw().iter().map(|&b| b >= 128).collect())
}

/// Writes one pair in the dataset layout.
pub fn write_pair(root: &Path, pair: &TrainingPair, seed: u64) -> Result<(), WorldError> {
    let dir = pair_dir(root, pair.index);
    let seg_dir = dir.join("segments0");
    fs::create_dir_all(&seg_dir)?;
    save_rgb(&dir.join("frame0.png"), &pair.frame0.image)?;
    save_rgb(&dir.join("frame1.png"), &pair.frame1.image)?;
    for (k, mask) in pair.frame0.segments.iter().enumerate() {
        save_mask(&seg_dir.join(format!("{k}.png")), mask)?;
    }
    let meta = PairMeta {
        index: pair.index,
        seed,
        frame0_blocks: pair.scene0.blocks.clone(),
        frame1_blocks: pair.scene1.blocks.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// One pair as stored on disk: 8-bit images plus masks and metadata.
#[derive(Debug, Clone)]
pub struct StoredPair {
    pub meta: PairMeta,
    pub frame0: super::raster::Image,
    pub frame1: super::raster::Image,
    pub segments0: Vec<Mask>,
}

pub fn read_pair(root: &Path, index: u64) -> Result<StoredPair, WorldError> {
    let dir = pair_dir(root, index);
    let meta: PairMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let frame0 = load_rgb(&dir.join("frame0.png"))?;
    let frame1 = load_rgb(&dir.join("frame1.png"))?;
    let mut segments0 = Vec::with_capacity(meta.frame0_blocks.len());
    for k in 0..meta.frame0_blocks.len() {
        segments0.push(load_mask(&dir.join("segments0").join(format!("{k}.png")))?);
    }
    Ok(StoredPair { meta, frame0, frame1, segments0 })
}

/// Number of pairs present under `root/pairs`.
pub fn count_pairs(root: &Path) -> Result<u64, WorldError> {
    let dir = root.join("pairs");
    let mut n = 0u64;
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            if entry?.file_type()?.is_dir() {
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Generates `count` pairs under `root`. Output bytes are a pure function of
/// `(count, seed, cfg)`; sharding across workers does not change them.
pub fn generate_dataset(
    count: u64,
    seed: u64,
    cfg: &GenConfig,
    root: &Path,
    workers: usize,
) -> Result<(), WorldError> {
    fs::create_dir_all(root.join("pairs"))?;
    let indices: Vec<u64> = (0..count).collect();
    let run = |index: &u64| -> Result<(), WorldError> {
        let pair = generate_pair(seed, *index, cfg);
        write_pair(root, &pair, seed)
    };
    if workers > 1 {
        indices.par_iter().try_for_each(run)?;
    } else {
        indices.iter().try_for_each(run)?;
    }
    Ok(())
}

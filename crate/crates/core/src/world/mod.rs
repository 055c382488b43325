//! Deterministic 2-D block world: ground-truth settling physics,
//! rasterization with per-block segmentation, and training-pair generation.

mod block;
mod dataset;
mod error;
mod raster;
mod settle;

pub use block::{
    hsv_to_rgb, hue_distance, hue_to_rgb, Block, BlockShape, Orientation, Scene, WorldCfg,
    TRIANGLE_HEIGHT,
};
pub use dataset::{
    count_pairs, generate_dataset, generate_pair, generate_scenes, pair_dir, read_pair,
    sample_block, write_pair, GenConfig, PairMeta, StoredPair, TrainingPair,
};
pub use error::WorldError;
pub use raster::{
    background_frame, from_rgb8, render_frame, to_rgb8, Frame, Image, Mask, BACKGROUND,
    PLATFORM_COLOR, RESOLUTION,
};
pub use settle::{clamp_to_world, settle};

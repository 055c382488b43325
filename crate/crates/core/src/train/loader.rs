use std::path::Path;

use crate::model::{frame_segments, image_chw};
use crate::nn::{Real, Tensor};
use crate::world::{count_pairs, read_pair, Frame, TrainingPair, WorldError};

/// One pair prepared for the networks: masked segment tensors for the
/// observed frame and CHW targets for both frames.
#[derive(Debug, Clone)]
pub struct PairTensors<R: Real> {
    pub index: u64,
    pub segments: Vec<Vec<R>>,
    pub i0: Tensor<R>,
    pub i1: Tensor<R>,
}

impl<R: Real> PairTensors<R> {
    pub fn from_frames(index: u64, frame0: &Frame, i1: &crate::world::Image, res: usize) -> Self {
        PairTensors {
            index,
            segments: frame_segments(frame0),
            i0: Tensor::new(vec![3, res, res], image_chw(&frame0.image)).expect("frame tensor"),
            i1: Tensor::new(vec![3, res, res], image_chw(i1)).expect("frame tensor"),
        }
    }

    pub fn from_pair(pair: &TrainingPair, res: usize) -> Self {
        Self::from_frames(pair.index, &pair.frame0, &pair.frame1.image, res)
    }
}

/// Reads every stored pair under a dataset root into network-ready tensors.
pub fn load_stored_pairs<R: Real>(
    root: &Path,
    res: usize,
) -> Result<Vec<PairTensors<R>>, WorldError> {
    let count = count_pairs(root)?;
    let mut out = Vec::with_capacity(count as usize);
    for index in 0..count {
        let stored = read_pair(root, index)?;
        let frame0 = Frame {
            image: stored.frame0,
            segments: stored.segments0,
        };
        out.push(PairTensors::from_frames(index, &frame0, &stored.frame1, res));
    }
    Ok(out)
}

use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{chw_image, encode_segments, frame_segments, predict_image, Nets};
use crate::nn::{ParamSet, Real};
use crate::train::{FeatureLossNet, PairTensors};
use crate::world::{to_rgb8, TrainingPair};

/// Prediction-quality metrics over a pair set: reconstruction (`*0`, no
/// physics) and prediction (`*1`, with physics), in pixel MSE and in the
/// frozen feature space when the checkpoint carries the extractor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub pairs: usize,
    pub mse0: f64,
    pub mse1: f64,
    pub feat0: Option<f64>,
    pub feat1: Option<f64>,
    pub panels: Vec<PathBuf>,
}

fn mse<R: Real>(pred: &[R], target: &[R]) -> f64 {
    let mut s = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let d = p.to_f64() - t.to_f64();
        s += d * d;
    }
    s / pred.len() as f64
}

fn feat_distance<R: Real>(
    params: &ParamSet<R>,
    featnet: &FeatureLossNet,
    a: &[R],
    b: &[R],
    res: usize,
    slope: R,
) -> f64 {
    let fa = featnet.features(params, a, res, slope);
    let fb = featnet.features(params, b, res, slope);
    let total: f64 = fa.iter().zip(&fb).map(|(x, y)| mse(x, y)).sum();
    total / fa.len() as f64
}

/// Side-by-side panel: observed, reconstruction, settled, prediction.
fn panel<R: Real>(i0: &[R], pred0: &[R], i1: &[R], pred1: &[R], res: usize) -> RgbImage {
    let mut out = RgbImage::new((res * 4) as u32, res as u32);
    for (slot, chw) in [i0, pred0, i1, pred1].into_iter().enumerate() {
        let img = to_rgb8(&chw_image(chw, res));
        for y in 0..res {
            for x in 0..res {
                let p = (y * res + x) * 3;
                out.put_pixel(
                    (slot * res + x) as u32,
                    y as u32,
                    image::Rgb([img[p], img[p + 1], img[p + 2]]),
                );
            }
        }
    }
    out
}

/// Evaluates reconstruction and prediction quality on held-out pairs,
/// optionally writing side-by-side panels for the first `panel_count` pairs.
pub fn prediction_eval<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    featnet: Option<&FeatureLossNet>,
    pairs: &[PairTensors<R>],
    out_dir: Option<&Path>,
    panel_count: usize,
    workers: usize,
) -> Result<PredictionReport, EvalError> {
    let res = nets.config.resolution;
    let slope = R::from_f64(nets.config.leaky_slope);
    let eval = |pair: &PairTensors<R>| -> (f64, f64, f64, f64, Vec<R>, Vec<R>) {
        let pred0 = predict_image(params, nets, &pair.segments, false);
        let pred1 = predict_image(params, nets, &pair.segments, true);
        let m0 = mse(&pred0, pair.i0.data());
        let m1 = mse(&pred1, pair.i1.data());
        let (f0, f1) = match featnet {
            Some(fnet) => (
                feat_distance(params, fnet, &pred0, pair.i0.data(), res, slope),
                feat_distance(params, fnet, &pred1, pair.i1.data(), res, slope),
            ),
            None => (0.0, 0.0),
        };
        (m0, m1, f0, f1, pred0, pred1)
    };

    let results: Vec<_> = if workers > 1 {
        pairs.par_iter().map(eval).collect()
    } else {
        pairs.iter().map(eval).collect()
    };

    let n = results.len().max(1) as f64;
    let mse0 = results.iter().map(|r| r.0).sum::<f64>() / n;
    let mse1 = results.iter().map(|r| r.1).sum::<f64>() / n;
    let (feat0, feat1) = if featnet.is_some() {
        (
            Some(results.iter().map(|r| r.2).sum::<f64>() / n),
            Some(results.iter().map(|r| r.3).sum::<f64>() / n),
        )
    } else {
        (None, None)
    };

    let mut panels = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (i, (pair, r)) in pairs.iter().zip(&results).take(panel_count).enumerate() {
            let img = panel(pair.i0.data(), &r.4, pair.i1.data(), &r.5, res);
            let path = dir.join(format!("pred_{i:03}.png"));
            img.save(&path)?;
            panels.push(path);
        }
    }

    Ok(PredictionReport {
        pairs: results.len(),
        mse0,
        mse1,
        feat0,
        feat1,
        panels,
    })
}

/// Paired comparison for the settled frame: predicting its pixels from the
/// settled segments themselves (no physics) versus from the observed frame
/// through the physics module. A perfect physics module would close the gap.
pub fn reconstruction_vs_prediction<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    pairs: &[TrainingPair],
    workers: usize,
) -> (f64, f64) {
    let res = nets.config.resolution;
    let one = |pair: &TrainingPair| -> (f64, f64) {
        let i1: Vec<R> = crate::model::image_chw(&pair.frame1.image);
        let direct_segs = frame_segments::<R>(&pair.frame1);
        let direct_objs = encode_segments(params, nets, &direct_segs);
        let (im, hm) = crate::model::render_objects(params, nets, &direct_objs);
        let direct = crate::model::composite(params, nets, &im, &hm, direct_objs.len());

        let through = predict_image(params, nets, &frame_segments::<R>(&pair.frame0), true);
        (mse(&direct, &i1), mse(&through, &i1))
    };
    let results: Vec<(f64, f64)> = if workers > 1 {
        pairs.par_iter().map(one).collect()
    } else {
        pairs.iter().map(one).collect()
    };
    let n = results.len().max(1) as f64;
    let _ = res;
    (
        results.iter().map(|r| r.0).sum::<f64>() / n,
        results.iter().map(|r| r.1).sum::<f64>() / n,
    )
}

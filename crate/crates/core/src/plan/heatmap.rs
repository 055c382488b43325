use std::path::Path;

use image::RgbImage;

use super::score::SampleScore;
use crate::world::{WorldCfg, WorldError};

/// Renders a step's sample scores as a heatmap over (x, drop-height): each
/// cell keeps its best (lowest) distance, brighter meaning better. Infinite
/// scores and empty cells stay dark.
pub fn score_heatmap(
    samples: &[SampleScore],
    world: &WorldCfg,
    width: u32,
    height: u32,
) -> RgbImage {
    let mut best = vec![f64::INFINITY; (width * height) as usize];
    let mut finite: Vec<f64> = Vec::new();
    for s in samples {
        if !s.distance.is_finite() {
            continue;
        }
        finite.push(s.distance);
        let cx = ((s.action.x / world.width) * width as f64)
            .clamp(0.0, width as f64 - 1.0) as u32;
        let cy = ((1.0 - s.action.drop_h / world.height) * height as f64)
            .clamp(0.0, height as f64 - 1.0) as u32;
        let idx = (cy * width + cx) as usize;
        if s.distance < best[idx] {
            best[idx] = s.distance;
        }
    }
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    let span = (hi - lo).max(1e-12);

    let mut img = RgbImage::new(width, height);
    for (i, px) in img.pixels_mut().enumerate() {
        let d = best[i];
        if d.is_finite() {
            let t = 1.0 - ((d - lo) / span).clamp(0.0, 1.0);
            *px = image::Rgb(ramp(t));
        } else {
            *px = image::Rgb([12, 12, 16]);
        }
    }
    img
}

/// Dark blue → magenta → yellow color ramp.
fn ramp(t: f64) -> [u8; 3] {
    let r = (255.0 * t.powf(0.7)).round() as u8;
    let g = (255.0 * t * t).round() as u8;
    let b = (80.0 + 120.0 * (1.0 - t)).round() as u8;
    [r, g, b]
}

pub fn write_score_heatmap(
    path: impl AsRef<Path>,
    samples: &[SampleScore],
    world: &WorldCfg,
) -> Result<(), WorldError> {
    let img = score_heatmap(samples, world, 128, 64);
    img.save(path)?;
    Ok(())
}

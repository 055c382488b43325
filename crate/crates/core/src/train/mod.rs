//! Joint training of perception, physics, and rendering from before/after
//! pairs.
//!
//! Each pair contributes four loss terms: pixel and feature-space
//! reconstruction of the observed frame (through the encoder and renderer)
//! and of the settled frame (additionally through the physics predictor).
//! The feature terms use a small strided conv extractor whose random
//! parameters are frozen at initialization.

mod config;
mod loader;

pub use config::TrainConfig;
pub use loader::{load_stored_pairs, PairTensors};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    composite_tape, encode_segments_tape, render_objects_tape, save_model, segments_input,
    simulate_physics_tape, ConvLayer, Nets,
};
use crate::nn::init::{split_seed, uniform_fan_in};
use crate::nn::kernels::{self, ConvCfg};
use crate::nn::{AdamState, GradStore, NnError, NodeId, ParamSet, Real, Tape, Tensor};
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    World(#[from] WorldError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("non-finite loss at step {step} (pair index {pair})")]
    NonFinite { step: usize, pair: u64 },

    #[error("dataset is empty after filtering")]
    EmptyDataset,
}

/// Frozen random conv feature extractor standing in for a pretrained
/// perceptual network. Parameters are registered alongside the model's but
/// are never passed to the optimizer.
#[derive(Debug, Clone)]
pub struct FeatureLossNet {
    pub convs: Vec<ConvLayer>,
    pub channels: Vec<usize>,
}

const FEAT_CFG: ConvCfg = ConvCfg { kernel: 4, stride: 2, pad: 1 };

impl FeatureLossNet {
    pub fn build<R: Real>(params: &mut ParamSet<R>, channels: &[usize], seed: u64) -> Self {
        let mut chans = vec![3usize];
        chans.extend_from_slice(channels);
        let convs = chans
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let name = format!("featloss.conv{i}");
                let w = params.add(
                    format!("{name}.weight"),
                    uniform_fan_in(
                        vec![d[1], d[0], FEAT_CFG.kernel, FEAT_CFG.kernel],
                        d[0] * FEAT_CFG.kernel * FEAT_CFG.kernel,
                        seed,
                        &format!("{name}.weight"),
                    ),
                );
                let b = params.add(format!("{name}.bias"), Tensor::zeros(vec![d[1]]));
                ConvLayer { w, b }
            })
            .collect();
        FeatureLossNet { convs, channels: channels.to_vec() }
    }

    /// Rebuilds handles against a loaded parameter set, if present.
    pub fn attach<R: Real>(params: &ParamSet<R>) -> Option<Self> {
        let mut convs = Vec::new();
        let mut channels = Vec::new();
        for i in 0.. {
            let (Some(w), Some(b)) = (
                params.id_of(&format!("featloss.conv{i}.weight")),
                params.id_of(&format!("featloss.conv{i}.bias")),
            ) else {
                break;
            };
            channels.push(params.get(w).shape()[0]);
            convs.push(ConvLayer { w, b });
        }
        if convs.is_empty() {
            None
        } else {
            Some(FeatureLossNet { convs, channels })
        }
    }

    /// Multi-scale feature maps of one CHW image (inference path).
    pub fn features<R: Real>(
        &self,
        params: &ParamSet<R>,
        image: &[R],
        res: usize,
        slope: R,
    ) -> Vec<Vec<R>> {
        let mut maps = Vec::with_capacity(self.convs.len());
        let mut cur = image.to_vec();
        let mut ci = 3;
        let mut side = res;
        for layer in &self.convs {
            let w = params.get(layer.w);
            let b = params.get(layer.b);
            let co = w.shape()[0];
            let out_side = FEAT_CFG.out_size(side).expect("feature net geometry");
            let mut y = vec![R::ZERO; co * out_side * out_side];
            kernels::conv2d_fwd(&cur, 1, ci, side, side, w.data(), b.data(), co, FEAT_CFG, &mut y);
            let mut a = vec![R::ZERO; y.len()];
            kernels::leaky_relu_fwd(&y, slope, &mut a);
            maps.push(a.clone());
            cur = a;
            ci = co;
            side = out_side;
        }
        maps
    }

    /// Tape path mirroring [`Self::features`].
    fn features_tape<R: Real>(
        &self,
        tape: &mut Tape<'_, R>,
        image: NodeId,
        res: usize,
        slope: R,
    ) -> Result<Vec<NodeId>, NnError> {
        let mut maps = Vec::with_capacity(self.convs.len());
        let mut cur = tape.reshape(image, vec![1, 3, res, res])?;
        for layer in &self.convs {
            let (w, b) = (tape.param(layer.w), tape.param(layer.b));
            cur = tape.conv2d(cur, w, b, FEAT_CFG)?;
            cur = tape.leaky_relu(cur, slope);
            maps.push(cur);
        }
        Ok(maps)
    }
}

/// Per-pair loss values as they enter the total: the four components are
/// already weighted, and `total` is exactly their left-to-right sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossReport {
    pub l2_recon: f64,
    pub feat_recon: f64,
    pub l2_pred: f64,
    pub feat_pred: f64,
    pub total: f64,
}

impl LossReport {
    fn add(&mut self, other: &LossReport) {
        self.l2_recon += other.l2_recon;
        self.feat_recon += other.feat_recon;
        self.l2_pred += other.l2_pred;
        self.feat_pred += other.feat_pred;
        self.total += other.total;
    }

    fn scale(&mut self, k: f64) {
        self.l2_recon *= k;
        self.feat_recon *= k;
        self.l2_pred *= k;
        self.feat_pred *= k;
        self.total *= k;
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Builds the full training graph for one pair and returns the loss nodes.
#[allow(clippy::too_many_arguments)]
fn pair_loss_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    nets: &Nets,
    featnet: &FeatureLossNet,
    segments: &[Vec<R>],
    i0: &Tensor<R>,
    i1: &Tensor<R>,
    l2_weight: f64,
    feat_weight: f64,
) -> Result<(NodeId, LossReport), NnError> {
    let res = nets.config.resolution;
    let slope = R::from_f64(nets.config.leaky_slope);

    let input = segments_input(tape, res, segments);
    let objs = encode_segments_tape(tape, nets, input)?;
    let objs_bar = simulate_physics_tape(tape, nets, objs)?;
    let (im0, h0) = render_objects_tape(tape, nets, objs)?;
    let (im1, h1) = render_objects_tape(tape, nets, objs_bar)?;
    let pred0 = composite_tape(tape, im0, h0)?;
    let pred1 = composite_tape(tape, im1, h1)?;

    let mut components = Vec::with_capacity(4);
    let mut raw = [0.0f64; 4];
    for (slot, (pred, target)) in [(pred0, i0), (pred1, i1)].into_iter().enumerate() {
        let l2 = tape.mse(pred, target)?;
        let l2 = tape.scale(l2, R::from_f64(l2_weight));
        raw[slot * 2] = tape.value(l2)[0].to_f64();
        components.push(l2);

        let pred_maps = featnet.features_tape(tape, pred, res, slope)?;
        let target_maps = featnet.features(tape.params(), target.data(), res, slope);
        let mut layer_losses = Vec::with_capacity(pred_maps.len());
        for (m, t) in pred_maps.iter().zip(&target_maps) {
            let shape = tape.shape(*m).to_vec();
            let target_t = Tensor::new(shape, t.clone())?;
            layer_losses.push(tape.mse(*m, &target_t)?);
        }
        let feat = tape.add_scalars(&layer_losses)?;
        let feat = tape.scale(feat, R::from_f64(feat_weight / pred_maps.len() as f64));
        raw[slot * 2 + 1] = tape.value(feat)[0].to_f64();
        components.push(feat);
    }

    let total = tape.add_scalars(&components)?;
    let report = LossReport {
        l2_recon: raw[0],
        feat_recon: raw[1],
        l2_pred: raw[2],
        feat_pred: raw[3],
        total: tape.value(total)[0].to_f64(),
    };
    Ok((total, report))
}

/// Losses for a single pair without gradients. Pairs with no segments are
/// reported as `None` (the training loop logs and skips them).
pub fn forward_losses<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    featnet: &FeatureLossNet,
    pair: &PairTensors<R>,
    l2_weight: f64,
    feat_weight: f64,
) -> Result<Option<LossReport>, TrainError> {
    if pair.segments.is_empty() {
        return Ok(None);
    }
    let mut tape = Tape::new(params);
    let (_, report) = pair_loss_tape(
        &mut tape, nets, featnet, &pair.segments, &pair.i0, &pair.i1, l2_weight, feat_weight,
    )?;
    Ok(Some(report))
}

fn pair_grads<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    featnet: &FeatureLossNet,
    pair: &PairTensors<R>,
    l2_weight: f64,
    feat_weight: f64,
) -> Result<(GradStore<R>, LossReport), TrainError> {
    let mut tape = Tape::new(params);
    let (total, report) = pair_loss_tape(
        &mut tape, nets, featnet, &pair.segments, &pair.i0, &pair.i1, l2_weight, feat_weight,
    )?;
    let grads = tape.backward(total)?;
    Ok((grads, report))
}

/// Everything `train` leaves behind, for callers that keep going (tests,
/// the evaluation pipeline).
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_curve: PathBuf,
    pub epoch_totals: Vec<f64>,
    pub holdout_mse0: f64,
    pub holdout_mse1: f64,
    pub steps: usize,
    /// Optimization wall time, accumulated across resumed attempts.
    pub elapsed_secs: f64,
}

/// Mean per-pixel squared error of the two predictions over a pair list
/// (reconstruction without physics for `mse0`, prediction with physics for
/// `mse1`).
pub fn holdout_mse<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    pairs: &[PairTensors<R>],
    workers: usize,
) -> (f64, f64) {
    let eval = |pair: &PairTensors<R>| -> (f64, f64) {
        let pred0 = crate::model::predict_image(params, nets, &pair.segments, false);
        let pred1 = crate::model::predict_image(params, nets, &pair.segments, true);
        let mse = |pred: &[R], target: &Tensor<R>| -> f64 {
            let mut s = 0.0;
            for (p, t) in pred.iter().zip(target.data()) {
                let d = p.to_f64() - t.to_f64();
                s += d * d;
            }
            s / pred.len() as f64
        };
        (mse(&pred0, &pair.i0), mse(&pred1, &pair.i1))
    };
    let results: Vec<(f64, f64)> = if workers > 1 {
        pairs.par_iter().map(eval).collect()
    } else {
        pairs.iter().map(eval).collect()
    };
    let n = results.len().max(1) as f64;
    let (s0, s1) = results
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    (s0 / n, s1 / n)
}

/// Trains the three modules jointly at single precision. Deterministic given
/// the config: data order, initialization, and gradient reduction are all
/// seeded or fixed.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with_data::<f32>(cfg, None)
}

/// Writes the full training state (parameters plus optimizer moments) so an
/// interrupted run resumes bit-exactly at the next epoch boundary. The write
/// goes through a temporary file so a kill cannot corrupt the state.
fn save_train_state<R: Real>(
    path: &Path,
    params: &ParamSet<R>,
    adam: &AdamState<R>,
    epochs_done: usize,
    csv_steps: usize,
    epoch_totals: &[f64],
    elapsed_secs: f64,
) -> Result<(), TrainError> {
    let mut state = params.clone();
    let (m, v, step) = adam.state();
    for (i, buf) in m.iter().enumerate() {
        state.add(format!("optim.m.{i:04}"), Tensor::new(vec![buf.len()], buf.clone())?);
    }
    for (i, buf) in v.iter().enumerate() {
        state.add(format!("optim.v.{i:04}"), Tensor::new(vec![buf.len()], buf.clone())?);
    }
    let meta = serde_json::json!({
        "format": "stacklab-train-state",
        "epochs_done": epochs_done,
        "adam_step": step,
        "csv_steps": csv_steps,
        "epoch_totals": epoch_totals,
        "elapsed_secs": elapsed_secs,
    })
    .to_string();
    let tmp = path.with_extension("ckpt.tmp");
    crate::nn::save_checkpoint(&tmp, &meta, &state)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Restores state written by [`save_train_state`] into freshly built
/// parameters (the names and shapes must match the current architecture).
fn load_train_state<R: Real>(
    path: &Path,
    params: &mut ParamSet<R>,
    trainable: Vec<crate::nn::ParamId>,
    lr: f64,
) -> Result<(AdamState<R>, usize, usize, Vec<f64>, f64), TrainError> {
    let (meta, loaded) = crate::nn::load_checkpoint::<R>(path)?;
    let meta: serde_json::Value = serde_json::from_str(&meta)
        .map_err(|e| TrainError::Config(format!("train state metadata: {e}")))?;
    if meta["format"].as_str() != Some("stacklab-train-state") {
        return Err(TrainError::Config("not a training-state checkpoint".into()));
    }
    for id in 0..params.len() {
        let name = params.name(id).to_string();
        let src = loaded
            .id_of(&name)
            .ok_or_else(|| TrainError::Config(format!("train state missing `{name}`")))?;
        if loaded.get(src).shape() != params.get(id).shape() {
            return Err(TrainError::Config(format!("train state shape mismatch for `{name}`")));
        }
        params
            .get_mut(id)
            .data_mut()
            .copy_from_slice(loaded.get(src).data());
    }
    let mut m = Vec::with_capacity(trainable.len());
    let mut v = Vec::with_capacity(trainable.len());
    for i in 0..trainable.len() {
        for (list, tag) in [(&mut m, "m"), (&mut v, "v")] {
            let src = loaded
                .id_of(&format!("optim.{tag}.{i:04}"))
                .ok_or_else(|| TrainError::Config(format!("train state missing optim.{tag}.{i:04}")))?;
            list.push(loaded.get(src).data().to_vec());
        }
    }
    let adam_step = meta["adam_step"].as_u64().unwrap_or(0);
    let adam = AdamState::restore(params, trainable, lr, m, v, adam_step)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let totals = meta["epoch_totals"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
        .unwrap_or_default();
    Ok((
        adam,
        meta["epochs_done"].as_u64().unwrap_or(0) as usize,
        meta["csv_steps"].as_u64().unwrap_or(0) as usize,
        totals,
        meta["elapsed_secs"].as_f64().unwrap_or(0.0),
    ))
}

/// Training entry point that optionally takes preloaded pairs (tests use
/// this to stay off the filesystem) and a caller-chosen scalar type.
pub fn train_with_data<R: Real>(
    cfg: &TrainConfig,
    preloaded: Option<Vec<PairTensors<R>>>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let all = match preloaded {
        Some(p) => p,
        None => load_stored_pairs::<R>(&cfg.dataset, cfg.model.resolution)?,
    };
    let mut skipped = 0usize;
    let all: Vec<PairTensors<R>> = all
        .into_iter()
        .filter(|p| {
            if p.segments.is_empty() {
                skipped += 1;
                false
            } else {
                true
            }
        })
        .collect();
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} pairs with no segments");
    }
    if all.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let holdout_len = ((all.len() as f64 * cfg.holdout_frac) as usize).min(all.len() - 1);
    let split = all.len() - holdout_len;
    let (train_pairs, holdout_pairs) = all.split_at(split);

    let (mut params, nets) = Nets::build::<R>(&cfg.model, cfg.seed);
    let featnet = FeatureLossNet::build(&mut params, &cfg.feat_channels, cfg.seed);
    let state_path = cfg.out_dir.join("train_state.ckpt");
    let (mut adam, start_epoch, mut step, mut epoch_totals, prior_secs) = if state_path.exists() {
        let (adam, epochs_done, csv_steps, totals, prior) = load_train_state(
            &state_path,
            &mut params,
            nets.trainable_ids(),
            cfg.learning_rate,
        )?;
        eprintln!("resuming training at epoch {} ({csv_steps} steps done)", epochs_done + 1);
        (adam, epochs_done, csv_steps, totals, prior)
    } else {
        (
            AdamState::with_lr(&params, nets.trainable_ids(), cfg.learning_rate),
            0,
            0,
            Vec::new(),
            0.0,
        )
    };
    let attempt_start = std::time::Instant::now();

    // Bucket by object count so each batch is rectangular for the pairwise
    // physics computation.
    let mut buckets: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, p) in train_pairs.iter().enumerate() {
        buckets.entry(p.segments.len()).or_default().push(i);
    }
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for ids in buckets.values() {
        for chunk in ids.chunks(cfg.batch_size) {
            batches.push(chunk.to_vec());
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("worker pool");

    let curve_path = cfg.out_dir.join("loss_curve.csv");
    let mut curve = if start_epoch > 0 && curve_path.exists() {
        fs::OpenOptions::new().append(true).open(&curve_path)?
    } else {
        let mut f = fs::File::create(&curve_path)?;
        writeln!(f, "step,l2_recon,feat_recon,l2_pred,feat_pred,total")?;
        f
    };

    for epoch in start_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        shuffle(&mut order, split_seed(cfg.seed, 0x5eed_0000 + epoch as u64));

        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0usize;
        for &bi in &order {
            let batch: Vec<&PairTensors<R>> =
                batches[bi].iter().map(|&i| &train_pairs[i]).collect();
            let results: Vec<Result<(GradStore<R>, LossReport), TrainError>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|pair| {
                        pair_grads(&params, &nets, &featnet, pair, cfg.l2_weight, cfg.feat_weight)
                    })
                    .collect()
            });

            // Deterministic reduction: per-pair gradients are summed in
            // batch order regardless of how workers interleaved.
            let mut sum: Option<GradStore<R>> = None;
            let mut report = LossReport::default();
            for (pair, res) in batch.iter().zip(results) {
                let (grads, r) = res?;
                if !r.is_finite() {
                    return Err(TrainError::NonFinite { step, pair: pair.index });
                }
                report.add(&r);
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => acc.add_assign(&grads)?,
                }
            }
            let mut grads = sum.expect("nonempty batch");
            grads.scale(R::from_f64(1.0 / batch.len() as f64));
            report.scale(1.0 / batch.len() as f64);

            adam.step(&mut params, &grads)?;
            writeln!(
                curve,
                "{step},{:.8},{:.8},{:.8},{:.8},{:.8}",
                report.l2_recon, report.feat_recon, report.l2_pred, report.feat_pred, report.total
            )?;
            epoch_sum += report.total;
            epoch_batches += 1;
            step += 1;
        }
        epoch_totals.push(epoch_sum / epoch_batches.max(1) as f64);
        eprintln!(
            "epoch {}/{}: mean total loss {:.5}",
            epoch + 1,
            cfg.epochs,
            epoch_totals.last().unwrap()
        );

        if (epoch + 1) % cfg.checkpoint_every == 0 {
            save_model(
                cfg.out_dir.join(format!("ckpt_epoch{:03}.ckpt", epoch + 1)),
                &params,
                &nets,
            )?;
        }
        curve.flush()?;
        save_train_state(
            &state_path,
            &params,
            &adam,
            epoch + 1,
            step,
            &epoch_totals,
            prior_secs + attempt_start.elapsed().as_secs_f64(),
        )?;
    }
    curve.flush()?;

    let checkpoint = cfg.out_dir.join("model.ckpt");
    save_model(&checkpoint, &params, &nets)?;
    let eval_pairs = if holdout_pairs.is_empty() { train_pairs } else { holdout_pairs };
    let (holdout_mse0, holdout_mse1) =
        pool.install(|| holdout_mse(&params, &nets, eval_pairs, cfg.workers));

    Ok(TrainOutcome {
        checkpoint,
        loss_curve: curve_path,
        epoch_totals,
        holdout_mse0,
        holdout_mse1,
        steps: step,
        elapsed_secs: prior_secs + attempt_start.elapsed().as_secs_f64(),
    })
}

/// Fisher–Yates driven by splitmix steps.
fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut state = seed;
    for i in (1..items.len()).rev() {
        state = split_seed(state, 0x9e37);
        items.swap(i, (state % (i as u64 + 1)) as usize);
    }
}

pub fn write_manifest(path: &Path, body: &serde_json::Value) -> Result<(), std::io::Error> {
    fs::write(path, serde_json::to_vec_pretty(body).expect("manifest serializes"))
}

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::action::{Action, ActionSampler};
use crate::model::{encode_segments, segment_image, Nets, ObjectSet};
use crate::nn::init::{split_seed, uniform_fan_in};
use crate::nn::{
    kernels, load_checkpoint, save_checkpoint, AdamState, NnError, ParamSet, Real, Tape, Tensor,
};
use crate::world::WorldCfg;

/// Two-layer MLP mapping an action encoding straight to an object vector,
/// bypassing rasterize+encode during planning.
#[derive(Debug, Clone)]
pub struct Embedder<R: Real> {
    pub params: ParamSet<R>,
    pub hidden: usize,
    pub object_dim: usize,
    pub leaky_slope: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbedderMeta {
    format: String,
    dtype: String,
    hidden: usize,
    object_dim: usize,
    leaky_slope: f64,
}

/// Fit statistics against the perception route on held-out actions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbedderReport {
    pub train_count: usize,
    pub val_count: usize,
    pub val_median_l2: f64,
    pub val_mean_l2: f64,
    pub val_q95_l2: f64,
}

impl<R: Real> Embedder<R> {
    pub fn build(object_dim: usize, hidden: usize, leaky_slope: f64, seed: u64) -> Self {
        let mut params = ParamSet::new();
        params.add(
            "embedder.l0.weight",
            uniform_fan_in::<R>(
                vec![hidden, Action::ENCODING_DIM],
                Action::ENCODING_DIM,
                seed,
                "embedder.l0.weight",
            ),
        );
        params.add("embedder.l0.bias", Tensor::zeros(vec![hidden]));
        params.add(
            "embedder.l1.weight",
            uniform_fan_in::<R>(vec![object_dim, hidden], hidden, seed, "embedder.l1.weight"),
        );
        params.add("embedder.l1.bias", Tensor::zeros(vec![object_dim]));
        Embedder {
            params,
            hidden,
            object_dim,
            leaky_slope,
        }
    }

    /// Embeds a batch of actions: [n, object_dim].
    pub fn encode_batch(&self, actions: &[Action], world: &WorldCfg) -> ObjectSet<R> {
        let n = actions.len();
        if n == 0 {
            return ObjectSet::empty(self.object_dim);
        }
        let mut x = Vec::with_capacity(n * Action::ENCODING_DIM);
        for a in actions {
            x.extend(a.encoding(world).into_iter().map(R::from_f64));
        }
        let w0 = self.params.get(0);
        let b0 = self.params.get(1);
        let w1 = self.params.get(2);
        let b1 = self.params.get(3);
        let mut h = vec![R::ZERO; n * self.hidden];
        kernels::linear_fwd(&x, n, Action::ENCODING_DIM, w0.data(), b0.data(), self.hidden, &mut h);
        let mut a = vec![R::ZERO; h.len()];
        kernels::leaky_relu_fwd(&h, R::from_f64(self.leaky_slope), &mut a);
        let mut out = vec![R::ZERO; n * self.object_dim];
        kernels::linear_fwd(&a, n, self.hidden, w1.data(), b1.data(), self.object_dim, &mut out);
        ObjectSet::from_rows(self.object_dim, out)
    }

    pub fn encode(&self, action: &Action, world: &WorldCfg) -> Vec<R> {
        self.encode_batch(std::slice::from_ref(action), world)
            .vec(0)
            .to_vec()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let meta = EmbedderMeta {
            format: "stacklab-embedder".into(),
            dtype: format!("{:?}", R::DTYPE),
            hidden: self.hidden,
            object_dim: self.object_dim,
            leaky_slope: self.leaky_slope,
        };
        save_checkpoint(path, &serde_json::to_string(&meta).unwrap(), &self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let (meta, params) = load_checkpoint::<R>(path)?;
        let meta: EmbedderMeta = serde_json::from_str(&meta)
            .map_err(|e| NnError::Format(format!("embedder metadata: {e}")))?;
        if meta.format != "stacklab-embedder" {
            return Err(NnError::Format(format!(
                "not an embedder checkpoint (format `{}`)",
                meta.format
            )));
        }
        if params.len() != 4 {
            return Err(NnError::Format("embedder expects 4 tensors".into()));
        }
        Ok(Embedder {
            params,
            hidden: meta.hidden,
            object_dim: meta.object_dim,
            leaky_slope: meta.leaky_slope,
        })
    }
}

/// Trains an embedder to regress the perception module's output on rendered
/// held-block segments across `count` random actions. Deterministic given
/// `seed`; the final tenth of the actions is held out for validation.
pub fn train_embedder<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    count: usize,
    seed: u64,
    epochs: usize,
    workers: usize,
) -> Result<(Embedder<R>, EmbedderReport), NnError> {
    let world = WorldCfg::default();
    let sampler = ActionSampler::all_shapes(world);
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0xe3bed));
    let actions: Vec<Action> = (0..count).map(|_| sampler.sample_uniform(&mut rng)).collect();

    // Perception-route targets, computed once.
    let targets: Vec<Vec<R>> = {
        let chunks: Vec<&[Action]> = actions.chunks(64).collect();
        let encode = |chunk: &&[Action]| -> Vec<Vec<R>> {
            let segs: Vec<Vec<R>> = chunk
                .iter()
                .map(|a| {
                    let frame = a.as_segment_frame(&world);
                    segment_image(&frame.image, &frame.segments[0])
                })
                .collect();
            let objs = encode_segments(params, nets, &segs);
            (0..objs.len()).map(|k| objs.vec(k).to_vec()).collect()
        };
        let nested: Vec<Vec<Vec<R>>> = if workers > 1 {
            chunks.par_iter().map(encode).collect()
        } else {
            chunks.iter().map(encode).collect()
        };
        nested.into_iter().flatten().collect()
    };

    let val_count = (count / 10).max(1).min(count.saturating_sub(1));
    let train_count = count - val_count;
    let dim = nets.config.object_dim;

    let mut emb = Embedder::<R>::build(dim, 512, nets.config.leaky_slope, split_seed(seed, 0x1717));
    let trainable = vec![0, 1, 2, 3];
    let mut adam = AdamState::with_lr(&emb.params, trainable, 1e-3);

    let batch = 64usize;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train_count).collect();
        let mut state = split_seed(seed, 0xe90c_0000 + epoch as u64);
        for i in (1..order.len()).rev() {
            state = split_seed(state, 0x9e37);
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        for chunk in order.chunks(batch) {
            let n = chunk.len();
            let mut x = Vec::with_capacity(n * Action::ENCODING_DIM);
            let mut t = Vec::with_capacity(n * dim);
            for &i in chunk {
                x.extend(actions[i].encoding(&world).into_iter().map(R::from_f64));
                t.extend_from_slice(&targets[i]);
            }
            let target = Tensor::new(vec![n, dim], t)?;
            let mut tape = Tape::new(&emb.params);
            let xin = tape.input(Tensor::new(vec![n, Action::ENCODING_DIM], x)?);
            let (w0, b0) = (tape.param(0), tape.param(1));
            let h = tape.linear(xin, w0, b0)?;
            let h = tape.leaky_relu(h, R::from_f64(emb.leaky_slope));
            let (w1, b1) = (tape.param(2), tape.param(3));
            let pred = tape.linear(h, w1, b1)?;
            let loss = tape.mse(pred, &target)?;
            let grads = tape.backward(loss)?;
            adam.step(&mut emb.params, &grads)?;
        }
    }

    // Validation in object space against the perception route.
    let mut errs: Vec<f64> = (train_count..count)
        .map(|i| {
            let got = emb.encode(&actions[i], &world);
            crate::model::l2_distance(&got, &targets[i])
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = errs[errs.len() / 2];
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let q95 = errs[((errs.len() as f64 * 0.95) as usize).min(errs.len() - 1)];
    Ok((
        emb,
        EmbedderReport {
            train_count,
            val_count,
            val_median_l2: median,
            val_mean_l2: mean,
            val_q95_l2: q95,
        },
    ))
}

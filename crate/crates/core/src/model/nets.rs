use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::nn::init::uniform_fan_in;
use crate::nn::{ParamId, ParamSet, Real, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
}

/// Conv encoder applied independently to each masked segment (f_percept).
#[derive(Debug, Clone)]
pub struct PerceptionNet {
    pub convs: Vec<ConvLayer>,
    pub fc: LinearLayer,
}

/// Three affine layers with leaky rectifiers between them: the "two hidden
/// layers of size 512" shape both physics subnets use.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<LinearLayer>,
}

/// Unary transition plus pairwise interaction subnets (f_physics).
#[derive(Debug, Clone)]
pub struct PhysicsNet {
    pub trans: Mlp,
    pub interact: Mlp,
}

/// One convolutional decoder: a linear seed projection to a
/// `seed_ch × seed_hw × seed_hw` map followed by stride-2 transposed convs.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub seed: LinearLayer,
    pub deconvs: Vec<ConvLayer>,
    /// Squash the final output to [0,1] (images yes, heatmaps no).
    pub squash: bool,
}

/// Per-object image and heatmap decoders plus the constant background
/// returned for empty object sets (f_render).
#[derive(Debug, Clone)]
pub struct RenderNet {
    pub image: Decoder,
    pub heat: Decoder,
    pub background: ParamId,
}

/// Parameter handles for the three learned modules.
#[derive(Debug, Clone)]
pub struct Nets {
    pub config: ModelConfig,
    pub percept: PerceptionNet,
    pub physics: PhysicsNet,
    pub render: RenderNet,
}

/// Checkpoint metadata: dtype tag plus the architecture constants, verified
/// on load.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub dtype: String,
    pub config: ModelConfig,
}

fn add_conv<R: Real>(
    params: &mut ParamSet<R>,
    name: &str,
    co: usize,
    ci: usize,
    k: usize,
    seed: u64,
) -> ConvLayer {
    let w = params.add(
        format!("{name}.weight"),
        uniform_fan_in(vec![co, ci, k, k], ci * k * k, seed, &format!("{name}.weight")),
    );
    let b = params.add(format!("{name}.bias"), Tensor::zeros(vec![co]));
    ConvLayer { w, b }
}

fn add_deconv<R: Real>(
    params: &mut ParamSet<R>,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
    seed: u64,
) -> ConvLayer {
    let w = params.add(
        format!("{name}.weight"),
        uniform_fan_in(vec![ci, co, k, k], ci * k * k, seed, &format!("{name}.weight")),
    );
    let b = params.add(format!("{name}.bias"), Tensor::zeros(vec![co]));
    ConvLayer { w, b }
}

fn add_linear<R: Real>(
    params: &mut ParamSet<R>,
    name: &str,
    dout: usize,
    din: usize,
    seed: u64,
) -> LinearLayer {
    let w = params.add(
        format!("{name}.weight"),
        uniform_fan_in(vec![dout, din], din, seed, &format!("{name}.weight")),
    );
    let b = params.add(format!("{name}.bias"), Tensor::zeros(vec![dout]));
    LinearLayer { w, b }
}

fn add_mlp<R: Real>(
    params: &mut ParamSet<R>,
    name: &str,
    dims: &[usize],
    seed: u64,
) -> Mlp {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, d)| add_linear(params, &format!("{name}.{i}"), d[1], d[0], seed))
        .collect();
    Mlp { layers }
}

fn add_decoder<R: Real>(
    params: &mut ParamSet<R>,
    name: &str,
    cfg: &ModelConfig,
    out_channels: usize,
    squash: bool,
    seed: u64,
) -> Decoder {
    let seed_dim = cfg.dec_seed_ch * cfg.dec_seed_hw * cfg.dec_seed_hw;
    let seed_fc = add_linear(params, &format!("{name}.seed"), seed_dim, cfg.object_dim, seed);
    let mut chans = vec![cfg.dec_seed_ch];
    chans.extend_from_slice(&cfg.dec_channels);
    chans.push(out_channels);
    let deconvs = chans
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            add_deconv(
                params,
                &format!("{name}.deconv{i}"),
                d[0],
                d[1],
                cfg.dec_kernels[i],
                seed,
            )
        })
        .collect();
    Decoder { seed: seed_fc, deconvs, squash }
}

impl Nets {
    /// Registers all parameters for the given architecture, initialized from
    /// `seed` (fan-in-scaled uniform weights, zero biases, mid-gray
    /// background).
    pub fn build<R: Real>(config: &ModelConfig, seed: u64) -> (ParamSet<R>, Nets) {
        config.validate().expect("valid model config");
        let mut params = ParamSet::new();

        let mut chans = vec![3usize];
        chans.extend_from_slice(&config.enc_channels);
        let convs = chans
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                add_conv(
                    &mut params,
                    &format!("percept.conv{i}"),
                    d[1],
                    d[0],
                    config.enc_kernel,
                    seed,
                )
            })
            .collect();
        let fc = add_linear(
            &mut params,
            "percept.fc",
            config.object_dim,
            config.enc_flat_dim(),
            seed,
        );
        let percept = PerceptionNet { convs, fc };

        let d = config.object_dim;
        let h = config.phys_hidden;
        let physics = PhysicsNet {
            trans: add_mlp(&mut params, "physics.trans", &[d, h, h, d], seed),
            interact: add_mlp(&mut params, "physics.interact", &[2 * d, h, h, d], seed),
        };

        let image = add_decoder(&mut params, "render.image", config, 3, true, seed);
        let heat = add_decoder(&mut params, "render.heat", config, 1, false, seed);
        let background = params.add(
            "render.background",
            Tensor::full(
                vec![3, config.resolution, config.resolution],
                R::from_f64(0.5),
            ),
        );
        let render = RenderNet { image, heat, background };

        (
            params,
            Nets {
                config: config.clone(),
                percept,
                physics,
                render,
            },
        )
    }

    /// Rebuilds handles against an existing parameter set (e.g. one loaded
    /// from a checkpoint), verifying that every expected tensor is present
    /// with the right shape. Extra tensors after the model block (such as a
    /// frozen feature extractor saved alongside it) are allowed.
    pub fn attach<R: Real>(config: &ModelConfig, params: &ParamSet<R>) -> Result<Nets, String> {
        let (reference, nets) = Nets::build::<R>(config, 0);
        if reference.len() > params.len() {
            return Err(format!(
                "parameter count mismatch: checkpoint has {}, architecture needs {}",
                params.len(),
                reference.len()
            ));
        }
        for (id, name, t) in reference.iter() {
            let other = params
                .id_of(name)
                .ok_or_else(|| format!("checkpoint is missing tensor `{name}`"))?;
            if other != id {
                return Err(format!("tensor `{name}` is out of manifest order"));
            }
            if params.get(other).shape() != t.shape() {
                return Err(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    params.get(other).shape(),
                    t.shape()
                ));
            }
        }
        Ok(nets)
    }

    /// All parameter ids, i.e. the jointly trained set.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for c in &self.percept.convs {
            ids.extend([c.w, c.b]);
        }
        ids.extend([self.percept.fc.w, self.percept.fc.b]);
        for mlp in [&self.physics.trans, &self.physics.interact] {
            for l in &mlp.layers {
                ids.extend([l.w, l.b]);
            }
        }
        for dec in [&self.render.image, &self.render.heat] {
            ids.extend([dec.seed.w, dec.seed.b]);
            for c in &dec.deconvs {
                ids.extend([c.w, c.b]);
            }
        }
        ids.push(self.render.background);
        ids
    }
}

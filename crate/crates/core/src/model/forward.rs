//! Forward passes of the three modules.
//!
//! Two routes exist over the same kernels: an inference path on plain
//! buffers (used by the planner and evaluation, trivially parallel) and a
//! tape path used during training. Both visit the kernels in the same order,
//! so their outputs are bit-identical.

use super::nets::{Decoder, Mlp, Nets};
use crate::nn::kernels::{self, composite_fwd, content_sorted_accumulate};
use crate::nn::{pair_rows, NnError, NodeId, ParamSet, Real, Tape, Tensor};
use crate::world::{Frame, Mask, RESOLUTION};

/// One learned object representation.
pub type ObjectVec<R> = Vec<R>;

/// An unordered collection of object vectors, stored row-major. Rows keep
/// the order of whatever produced them (segments or actions); that row index
/// is the only bookkeeping linking a vector back to its source.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSet<R: Real> {
    dim: usize,
    data: Vec<R>,
}

impl<R: Real> ObjectSet<R> {
    pub fn empty(dim: usize) -> Self {
        ObjectSet { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, data: Vec<R>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        ObjectSet { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vec(&self, k: usize) -> &[R] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> &[R] {
        &self.data
    }

    pub fn push(&mut self, row: &[R]) {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn remove(&mut self, k: usize) {
        let start = k * self.dim;
        self.data.drain(start..start + self.dim);
    }

    /// Euclidean distance between a row and an external vector.
    pub fn distance(&self, k: usize, other: &[R]) -> f64 {
        l2_distance(self.vec(k), other)
    }
}

pub fn l2_distance<R: Real>(a: &[R], b: &[R]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x.to_f64() - y.to_f64();
        s += d * d;
    }
    s.sqrt()
}

/// Extracts one masked segment as a CHW tensor: full-resolution RGB with
/// everything outside the mask zeroed, preserving absolute position.
pub fn segment_image<R: Real>(image: &crate::world::Image, mask: &Mask) -> Vec<R> {
    let hw = RESOLUTION * RESOLUTION;
    let mut out = vec![R::ZERO; 3 * hw];
    for p in 0..hw {
        if mask[p] {
            for c in 0..3 {
                out[c * hw + p] = R::from_f64(image.pixels[p * 3 + c] as f64);
            }
        }
    }
    out
}

/// All masked segments of a frame, in segment order.
pub fn frame_segments<R: Real>(frame: &Frame) -> Vec<Vec<R>> {
    frame
        .segments
        .iter()
        .map(|m| segment_image(&frame.image, m))
        .collect()
}

/// Converts a world image to a CHW tensor.
pub fn image_chw<R: Real>(image: &crate::world::Image) -> Vec<R> {
    let hw = RESOLUTION * RESOLUTION;
    let mut out = vec![R::ZERO; 3 * hw];
    for p in 0..hw {
        for c in 0..3 {
            out[c * hw + p] = R::from_f64(image.pixels[p * 3 + c] as f64);
        }
    }
    out
}

/// Converts a CHW tensor back to a world image (clamped to [0,1]).
pub fn chw_image<R: Real>(chw: &[R], res: usize) -> crate::world::Image {
    let hw = res * res;
    let mut pixels = vec![0.0f32; hw * 3];
    for p in 0..hw {
        for c in 0..3 {
            pixels[p * 3 + c] = (chw[c * hw + p].to_f64().clamp(0.0, 1.0)) as f32;
        }
    }
    crate::world::Image { pixels }
}

// ---------------------------------------------------------------------------
// inference path
// ---------------------------------------------------------------------------

fn mlp_fwd<R: Real>(params: &ParamSet<R>, mlp: &Mlp, x: &[R], n: usize, slope: R) -> Vec<R> {
    let mut cur = x.to_vec();
    let mut din = if n == 0 { 0 } else { cur.len() / n.max(1) };
    if n == 0 {
        return Vec::new();
    }
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        let w = params.get(layer.w);
        let b = params.get(layer.b);
        let dout = w.shape()[0];
        let mut y = vec![R::ZERO; n * dout];
        kernels::linear_fwd(&cur, n, din, w.data(), b.data(), dout, &mut y);
        if i != last {
            let mut a = vec![R::ZERO; y.len()];
            kernels::leaky_relu_fwd(&y, slope, &mut a);
            cur = a;
        } else {
            cur = y;
        }
        din = dout;
    }
    cur
}

/// Applies the perception encoder to each masked segment independently;
/// segments are batched through the conv stack for throughput.
pub fn encode_segments<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    segments: &[Vec<R>],
) -> ObjectSet<R> {
    let cfg = &nets.config;
    let n = segments.len();
    if n == 0 {
        return ObjectSet::empty(cfg.object_dim);
    }
    let res = cfg.resolution;
    let mut cur: Vec<R> = Vec::with_capacity(n * 3 * res * res);
    for s in segments {
        assert_eq!(s.len(), 3 * res * res, "segment is not a full-resolution image");
        cur.extend_from_slice(s);
    }
    let slope = R::from_f64(cfg.leaky_slope);
    let conv_cfg = cfg.enc_conv_cfg();
    let mut ci = 3;
    let mut side = res;
    for layer in &nets.percept.convs {
        let w = params.get(layer.w);
        let b = params.get(layer.b);
        let co = w.shape()[0];
        let out_side = conv_cfg.out_size(side).expect("encoder geometry");
        let mut y = vec![R::ZERO; n * co * out_side * out_side];
        kernels::conv2d_fwd(&cur, n, ci, side, side, w.data(), b.data(), co, conv_cfg, &mut y);
        let mut a = vec![R::ZERO; y.len()];
        kernels::leaky_relu_fwd(&y, slope, &mut a);
        cur = a;
        ci = co;
        side = out_side;
    }
    let flat = cfg.enc_flat_dim();
    let w = params.get(nets.percept.fc.w);
    let b = params.get(nets.percept.fc.b);
    let mut out = vec![R::ZERO; n * cfg.object_dim];
    kernels::linear_fwd(&cur, n, flat, w.data(), b.data(), cfg.object_dim, &mut out);
    ObjectSet::from_rows(cfg.object_dim, out)
}

/// Single-shot physics prediction over the whole object set:
/// each output is the unary transition of its vector plus the sum of its
/// pairwise interactions plus the vector itself. Interaction terms are
/// accumulated in canonical content order, so the map is bit-exactly
/// permutation-equivariant.
pub fn simulate_physics<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    objects: &ObjectSet<R>,
) -> ObjectSet<R> {
    let n = objects.len();
    let d = objects.dim();
    if n == 0 {
        return ObjectSet::empty(d);
    }
    let slope = R::from_f64(nets.config.leaky_slope);
    let trans = mlp_fwd(params, &nets.physics.trans, objects.rows(), n, slope);

    let rows = n * (n - 1);
    let mut pairs = vec![R::ZERO; rows * 2 * d];
    for (r, (k, j)) in pair_rows(n).enumerate() {
        pairs[r * 2 * d..r * 2 * d + d].copy_from_slice(objects.vec(k));
        pairs[r * 2 * d + d..(r + 1) * 2 * d].copy_from_slice(objects.vec(j));
    }
    let terms = mlp_fwd(params, &nets.physics.interact, &pairs, rows, slope);

    let mut sums = vec![R::ZERO; n * d];
    let mut group: Vec<&[R]> = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n {
        group.clear();
        for (r, (kk, _)) in pair_rows(n).enumerate() {
            if kk == k {
                group.push(&terms[r * d..(r + 1) * d]);
            }
        }
        content_sorted_accumulate(&mut group, &mut sums[k * d..(k + 1) * d]);
    }

    let mut out = vec![R::ZERO; n * d];
    for i in 0..n * d {
        out[i] = trans[i] + sums[i] + objects.rows()[i];
    }
    ObjectSet::from_rows(d, out)
}

fn decoder_fwd<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    dec: &Decoder,
    objects: &ObjectSet<R>,
) -> Vec<R> {
    let cfg = &nets.config;
    let n = objects.len();
    let slope = R::from_f64(cfg.leaky_slope);
    let seed_dim = cfg.dec_seed_ch * cfg.dec_seed_hw * cfg.dec_seed_hw;
    let w = params.get(dec.seed.w);
    let b = params.get(dec.seed.b);
    let mut y = vec![R::ZERO; n * seed_dim];
    kernels::linear_fwd(objects.rows(), n, cfg.object_dim, w.data(), b.data(), seed_dim, &mut y);
    let mut cur = vec![R::ZERO; y.len()];
    kernels::leaky_relu_fwd(&y, slope, &mut cur);

    let mut ci = cfg.dec_seed_ch;
    let mut side = cfg.dec_seed_hw;
    let last = dec.deconvs.len() - 1;
    for (i, layer) in dec.deconvs.iter().enumerate() {
        let tcfg = cfg.dec_conv_cfg(i);
        let w = params.get(layer.w);
        let b = params.get(layer.b);
        let co = w.shape()[1];
        let out_side = tcfg.out_size(side).expect("decoder geometry");
        let mut y = vec![R::ZERO; n * co * out_side * out_side];
        kernels::convt2d_fwd(&cur, n, ci, side, side, w.data(), b.data(), co, tcfg, &mut y);
        if i != last {
            let mut a = vec![R::ZERO; y.len()];
            kernels::leaky_relu_fwd(&y, slope, &mut a);
            cur = a;
        } else if dec.squash {
            let mut a = vec![R::ZERO; y.len()];
            kernels::sigmoid_fwd(&y, &mut a);
            cur = a;
        } else {
            cur = y;
        }
        ci = co;
        side = out_side;
    }
    cur
}

/// Decodes every object vector independently into a full-resolution image
/// and a single-channel heatmap: ([n,3,res,res], [n,1,res,res]).
pub fn render_objects<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    objects: &ObjectSet<R>,
) -> (Vec<R>, Vec<R>) {
    if objects.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let images = decoder_fwd(params, nets, &nets.render.image, objects);
    let heats = decoder_fwd(params, nets, &nets.render.heat, objects);
    (images, heats)
}

/// Composites per-object renderings into one image. With no objects the
/// learned constant background is returned.
pub fn composite<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    images: &[R],
    heats: &[R],
    n: usize,
) -> Vec<R> {
    let res = nets.config.resolution;
    let hw = res * res;
    if n == 0 {
        return params.get(nets.render.background).data().to_vec();
    }
    assert_eq!(images.len(), n * 3 * hw);
    assert_eq!(heats.len(), n * hw);
    composite_fwd(images, heats, n, 3, hw).0
}

/// Per-pixel compositing weights (normalized exponentials of the negated
/// heatmaps), exposed for tests and score visualizations.
pub fn composite_weights<R: Real>(heats: &[R], n: usize, hw: usize) -> Vec<R> {
    composite_fwd(&vec![R::ZERO; n * hw], heats, n, 1, hw).1
}

/// Full pipeline to a predicted composite for a set of segments, optionally
/// running physics first.
pub fn predict_image<R: Real>(
    params: &ParamSet<R>,
    nets: &Nets,
    segments: &[Vec<R>],
    run_physics: bool,
) -> Vec<R> {
    let objects = encode_segments(params, nets, segments);
    let objects = if run_physics {
        simulate_physics(params, nets, &objects)
    } else {
        objects
    };
    let (images, heats) = render_objects(params, nets, &objects);
    composite(params, nets, &images, &heats, objects.len())
}

// ---------------------------------------------------------------------------
// tape path (training)
// ---------------------------------------------------------------------------

pub fn encode_segments_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    nets: &Nets,
    segments: NodeId,
) -> Result<NodeId, NnError> {
    let cfg = &nets.config;
    let slope = R::from_f64(cfg.leaky_slope);
    let n = tape.shape(segments)[0];
    let mut cur = segments;
    for layer in &nets.percept.convs {
        let (w, b) = (tape.param(layer.w), tape.param(layer.b));
        cur = tape.conv2d(cur, w, b, cfg.enc_conv_cfg())?;
        cur = tape.leaky_relu(cur, slope);
    }
    let flat = cfg.enc_flat_dim();
    let cur = tape.reshape(cur, vec![n, flat])?;
    let (w, b) = (tape.param(nets.percept.fc.w), tape.param(nets.percept.fc.b));
    tape.linear(cur, w, b)
}

fn mlp_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    mlp: &Mlp,
    x: NodeId,
    slope: R,
) -> Result<NodeId, NnError> {
    let mut cur = x;
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        let (w, b) = (tape.param(layer.w), tape.param(layer.b));
        cur = tape.linear(cur, w, b)?;
        if i != last {
            cur = tape.leaky_relu(cur, slope);
        }
    }
    Ok(cur)
}

pub fn simulate_physics_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    nets: &Nets,
    objects: NodeId,
) -> Result<NodeId, NnError> {
    let slope = R::from_f64(nets.config.leaky_slope);
    let n = tape.shape(objects)[0];
    let trans = mlp_tape(tape, &nets.physics.trans, objects, slope)?;
    let pairs = tape.pair_concat(objects)?;
    let terms = mlp_tape(tape, &nets.physics.interact, pairs, slope)?;
    let sums = tape.pair_sum_rows(terms, n)?;
    let partial = tape.add(trans, sums)?;
    tape.add(partial, objects)
}

fn decoder_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    nets: &Nets,
    dec: &Decoder,
    objects: NodeId,
) -> Result<NodeId, NnError> {
    let cfg = &nets.config;
    let slope = R::from_f64(cfg.leaky_slope);
    let n = tape.shape(objects)[0];
    let (w, b) = (tape.param(dec.seed.w), tape.param(dec.seed.b));
    let mut cur = tape.linear(objects, w, b)?;
    cur = tape.leaky_relu(cur, slope);
    cur = tape.reshape(cur, vec![n, cfg.dec_seed_ch, cfg.dec_seed_hw, cfg.dec_seed_hw])?;
    let last = dec.deconvs.len() - 1;
    for (i, layer) in dec.deconvs.iter().enumerate() {
        let (w, b) = (tape.param(layer.w), tape.param(layer.b));
        cur = tape.conv2d_t(cur, w, b, cfg.dec_conv_cfg(i))?;
        if i != last {
            cur = tape.leaky_relu(cur, slope);
        } else if dec.squash {
            cur = tape.sigmoid(cur);
        }
    }
    Ok(cur)
}

/// Tape version of [`render_objects`]: ([n,3,res,res], [n,1,res,res]).
pub fn render_objects_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    nets: &Nets,
    objects: NodeId,
) -> Result<(NodeId, NodeId), NnError> {
    let images = decoder_tape(tape, nets, &nets.render.image, objects)?;
    let heats = decoder_tape(tape, nets, &nets.render.heat, objects)?;
    Ok((images, heats))
}

/// Tape version of [`composite`] for a nonempty object set.
pub fn composite_tape<R: Real>(
    tape: &mut Tape<'_, R>,
    images: NodeId,
    heats: NodeId,
) -> Result<NodeId, NnError> {
    tape.composite(images, heats)
}

/// Feeds a batch of segment tensors into a tape as one input node.
pub fn segments_input<R: Real>(
    tape: &mut Tape<'_, R>,
    res: usize,
    segments: &[Vec<R>],
) -> NodeId {
    let n = segments.len();
    let mut data = Vec::with_capacity(n * 3 * res * res);
    for s in segments {
        data.extend_from_slice(s);
    }
    tape.input(Tensor::new(vec![n, 3, res, res], data).expect("segment batch"))
}

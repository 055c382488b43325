//! Define-by-run reverse-mode autodiff over a flat node list.
//!
//! A tape borrows a read-only [`ParamSet`]; node values are owned by the tape
//! except parameter leaves, which reference the set. `backward` consumes the
//! recorded graph once and yields a dense [`GradStore`]; the tape must be
//! `reset` (or dropped) before recording again.

use super::error::{shape_err, NnError};
use super::kernels::{self, ConvCfg, ConvTCfg};
use super::params::{GradStore, ParamId, ParamSet};
use super::real::Real;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Val<R: Real> {
    Owned(Vec<R>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op<R: Real> {
    Leaf,
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        cfg: ConvCfg,
        n: usize,
        ci: usize,
        h: usize,
        wd: usize,
        co: usize,
    },
    ConvT2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        cfg: ConvTCfg,
        n: usize,
        ci: usize,
        h: usize,
        wd: usize,
        co: usize,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        n: usize,
        din: usize,
        dout: usize,
    },
    LeakyRelu {
        x: NodeId,
        slope: R,
    },
    Sigmoid {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Reshape {
        x: NodeId,
    },
    SelectRow {
        x: NodeId,
        row: usize,
        d: usize,
    },
    PairConcat {
        x: NodeId,
        n: usize,
        d: usize,
    },
    PairSumRows {
        x: NodeId,
        n: usize,
        d: usize,
    },
    Scale {
        x: NodeId,
        k: R,
    },
    AddScalars {
        xs: Vec<NodeId>,
    },
    SumAll {
        x: NodeId,
    },
    Mse {
        pred: NodeId,
        target: Vec<R>,
    },
    /// Soft depth compositing: weights are the per-pixel normalized
    /// exponentials of the negated heatmaps, cached for backward.
    Composite {
        images: NodeId,
        heats: NodeId,
        weights: Vec<R>,
        n: usize,
        ch: usize,
        hw: usize,
    },
}

struct Node<R: Real> {
    shape: Vec<usize>,
    val: Val<R>,
    op: Op<R>,
}

pub struct Tape<'p, R: Real> {
    params: &'p ParamSet<R>,
    nodes: Vec<Node<R>>,
    param_nodes: Vec<Option<NodeId>>,
    spent: bool,
}

fn value_of<'a, R: Real>(nodes: &'a [Node<R>], params: &'a ParamSet<R>, id: NodeId) -> &'a [R] {
    match &nodes[id.0].val {
        Val::Owned(v) => v,
        Val::Param(p) => params.get(*p).data(),
    }
}

fn grad_buf<'g, R: Real>(
    grads: &'g mut [Option<Vec<R>>],
    id: NodeId,
    numel: usize,
) -> &'g mut Vec<R> {
    grads[id.0].get_or_insert_with(|| vec![R::ZERO; numel])
}

/// Enumeration order of ordered object pairs (k, j), j != k: row index is
/// k*(n-1) + (j adjusted past the diagonal). Fixed so replays are bit-exact.
pub fn pair_rows(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |k| (0..n).filter(move |&j| j != k).map(move |j| (k, j)))
}


impl<'p, R: Real> Tape<'p, R> {
    pub fn new(params: &'p ParamSet<R>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            spent: false,
        }
    }

    pub fn params(&self) -> &ParamSet<R> {
        self.params
    }

    fn push(&mut self, shape: Vec<usize>, val: Val<R>, op: Op<R>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { shape, val, op });
        id
    }

    pub fn value(&self, id: NodeId) -> &[R] {
        value_of(&self.nodes, self.params, id)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn input(&mut self, t: Tensor<R>) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(shape, Val::Owned(t.into_data()), Op::Leaf)
    }

    /// Records a parameter leaf; repeated lookups return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id] {
            return n;
        }
        let shape = self.params.get(id).shape().to_vec();
        let node = self.push(shape, Val::Param(id), Op::Leaf);
        self.param_nodes[id] = Some(node);
        node
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, cfg: ConvCfg) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 4 {
            return Err(shape_err("conv2d", "[n,ci,h,w] input", &xs));
        }
        if ws.len() != 4 || ws[2] != cfg.kernel || ws[3] != cfg.kernel {
            return Err(shape_err("conv2d", "[co,ci,k,k] weight", &ws));
        }
        let (n, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, wci) = (ws[0], ws[1]);
        if wci != ci {
            return Err(shape_err("conv2d", format!("weight with ci={ci}"), &ws));
        }
        if bs != [co] {
            return Err(shape_err("conv2d", format!("bias [{co}]"), &bs));
        }
        let oh = cfg
            .out_size(h)
            .ok_or_else(|| shape_err("conv2d", "input no smaller than kernel", &xs))?;
        let ow = cfg
            .out_size(wd)
            .ok_or_else(|| shape_err("conv2d", "input no smaller than kernel", &xs))?;
        let mut y = vec![R::ZERO; n * co * oh * ow];
        kernels::conv2d_fwd(
            self.value(x),
            n,
            ci,
            h,
            wd,
            self.value(w),
            self.value(b),
            co,
            cfg,
            &mut y,
        );
        Ok(self.push(
            vec![n, co, oh, ow],
            Val::Owned(y),
            Op::Conv2d { x, w, b, cfg, n, ci, h, wd, co },
        ))
    }

    pub fn conv2d_t(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        cfg: ConvTCfg,
    ) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 4 {
            return Err(shape_err("conv2d_t", "[n,ci,h,w] input", &xs));
        }
        if ws.len() != 4 || ws[2] != cfg.kernel || ws[3] != cfg.kernel {
            return Err(shape_err("conv2d_t", "[ci,co,k,k] weight", &ws));
        }
        let (n, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        if ws[0] != ci {
            return Err(shape_err("conv2d_t", format!("weight with ci={ci}"), &ws));
        }
        let co = ws[1];
        if bs != [co] {
            return Err(shape_err("conv2d_t", format!("bias [{co}]"), &bs));
        }
        let oh = cfg
            .out_size(h)
            .ok_or_else(|| shape_err("conv2d_t", "valid geometry", &xs))?;
        let ow = cfg
            .out_size(wd)
            .ok_or_else(|| shape_err("conv2d_t", "valid geometry", &xs))?;
        let mut y = vec![R::ZERO; n * co * oh * ow];
        kernels::convt2d_fwd(
            self.value(x),
            n,
            ci,
            h,
            wd,
            self.value(w),
            self.value(b),
            co,
            cfg,
            &mut y,
        );
        Ok(self.push(
            vec![n, co, oh, ow],
            Val::Owned(y),
            Op::ConvT2d { x, w, b, cfg, n, ci, h, wd, co },
        ))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 2 {
            return Err(shape_err("linear", "[n,d] input", &xs));
        }
        if ws.len() != 2 || ws[1] != xs[1] {
            return Err(shape_err("linear", format!("[dout,{}] weight", xs[1]), &ws));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        if bs != [dout] {
            return Err(shape_err("linear", format!("bias [{dout}]"), &bs));
        }
        let mut y = vec![R::ZERO; n * dout];
        kernels::linear_fwd(self.value(x), n, din, self.value(w), self.value(b), dout, &mut y);
        Ok(self.push(
            vec![n, dout],
            Val::Owned(y),
            Op::Linear { x, w, b, n, din, dout },
        ))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: R) -> NodeId {
        let shape = self.shape(x).to_vec();
        let mut y = vec![R::ZERO; self.value(x).len()];
        kernels::leaky_relu_fwd(self.value(x), slope, &mut y);
        self.push(shape, Val::Owned(y), Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape(x).to_vec();
        let mut y = vec![R::ZERO; self.value(x).len()];
        kernels::sigmoid_fwd(self.value(x), &mut y);
        self.push(shape, Val::Owned(y), Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        if self.shape(a) != self.shape(b) {
            let got = self.shape(b).to_vec();
            return Err(shape_err("add", format!("{:?}", self.shape(a)), &got));
        }
        let shape = self.shape(a).to_vec();
        let y: Vec<R> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&u, &v)| u + v)
            .collect();
        Ok(self.push(shape, Val::Owned(y), Op::Add { a, b }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, NnError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() {
            return Err(shape_err("reshape", format!("{numel} elements"), self.shape(x)));
        }
        let y = self.value(x).to_vec();
        Ok(self.push(shape, Val::Owned(y), Op::Reshape { x }))
    }

    /// Extracts row `row` of a [n,d] matrix as a [d] vector.
    pub fn select_row(&mut self, x: NodeId, row: usize) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || row >= xs[0] {
            return Err(shape_err("select_row", format!("[n,d] with n > {row}"), &xs));
        }
        let d = xs[1];
        let y = self.value(x)[row * d..(row + 1) * d].to_vec();
        Ok(self.push(vec![d], Val::Owned(y), Op::SelectRow { x, row, d }))
    }

    /// Builds all ordered pairs of rows: [n,d] -> [n·(n-1), 2d], rows
    /// enumerated by [`pair_rows`].
    pub fn pair_concat(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(shape_err("pair_concat", "[n,d] input", &xs));
        }
        let (n, d) = (xs[0], xs[1]);
        let rows = n.saturating_sub(1) * n;
        let mut y = vec![R::ZERO; rows * 2 * d];
        {
            let v = self.value(x);
            for (r, (k, j)) in pair_rows(n).enumerate() {
                y[r * 2 * d..r * 2 * d + d].copy_from_slice(&v[k * d..(k + 1) * d]);
                y[r * 2 * d + d..(r + 1) * 2 * d].copy_from_slice(&v[j * d..(j + 1) * d]);
            }
        }
        Ok(self.push(vec![rows, 2 * d], Val::Owned(y), Op::PairConcat { x, n, d }))
    }

    /// Reduces pair rows back to per-object sums: [n·(n-1), d] -> [n,d].
    ///
    /// Each object's incoming terms are accumulated in a canonical
    /// content-sorted order, which makes the reduction bit-exactly
    /// equivariant under permutations of the object set.
    pub fn pair_sum_rows(&mut self, x: NodeId, n: usize) -> Result<NodeId, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || xs[0] != n.saturating_sub(1) * n {
            return Err(shape_err("pair_sum_rows", format!("[{}·({}-1),d]", n, n), &xs));
        }
        let d = xs[1];
        let mut y = vec![R::ZERO; n * d];
        {
            let v = self.value(x);
            let mut group: Vec<&[R]> = Vec::with_capacity(n.saturating_sub(1));
            for k in 0..n {
                group.clear();
                for (r, (kk, _)) in pair_rows(n).enumerate() {
                    if kk == k {
                        group.push(&v[r * d..(r + 1) * d]);
                    }
                }
                kernels::content_sorted_accumulate(&mut group, &mut y[k * d..(k + 1) * d]);
            }
        }
        Ok(self.push(vec![n, d], Val::Owned(y), Op::PairSumRows { x, n, d }))
    }

    pub fn scale(&mut self, x: NodeId, k: R) -> NodeId {
        let shape = self.shape(x).to_vec();
        let y: Vec<R> = self.value(x).iter().map(|&v| v * k).collect();
        self.push(shape, Val::Owned(y), Op::Scale { x, k })
    }

    /// Sums scalar nodes left to right.
    pub fn add_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId, NnError> {
        let mut total = R::ZERO;
        for &x in xs {
            let s = self.shape(x);
            if s != [1] {
                return Err(shape_err("add_scalars", "scalar [1]", s));
            }
            total += self.value(x)[0];
        }
        Ok(self.push(vec![1], Val::Owned(vec![total]), Op::AddScalars { xs: xs.to_vec() }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let mut s = R::ZERO;
        for &v in self.value(x) {
            s += v;
        }
        self.push(vec![1], Val::Owned(vec![s]), Op::SumAll { x })
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &Tensor<R>) -> Result<NodeId, NnError> {
        if self.shape(pred) != target.shape() {
            return Err(shape_err("mse", format!("{:?}", target.shape()), self.shape(pred)));
        }
        let p = self.value(pred);
        let t = target.data();
        let inv = R::from_f64(1.0 / p.len() as f64);
        let mut s = R::ZERO;
        for i in 0..p.len() {
            let d = p[i] - t[i];
            s += d * d;
        }
        s *= inv;
        Ok(self.push(
            vec![1],
            Val::Owned(vec![s]),
            Op::Mse { pred, target: t.to_vec() },
        ))
    }

    /// Composites per-object images [n,ch,h,w] with per-object heatmaps
    /// [n,1,h,w] into one [ch,h,w] image. Per-pixel weights are the
    /// normalized exponentials of the negated heatmaps, so a lower heatmap
    /// value makes an object more visible.
    pub fn composite(&mut self, images: NodeId, heats: NodeId) -> Result<NodeId, NnError> {
        let is = self.shape(images).to_vec();
        let hs = self.shape(heats).to_vec();
        if is.len() != 4 || hs.len() != 4 || hs[1] != 1 || is[0] != hs[0] || is[2..] != hs[2..] {
            return Err(shape_err("composite", format!("heatmaps [n,1,h,w] matching {is:?}"), &hs));
        }
        let (n, ch, h, w) = (is[0], is[1], is[2], is[3]);
        if n == 0 {
            return Err(shape_err("composite", "at least one object", &is));
        }
        let hw = h * w;
        let (y, weights) = kernels::composite_fwd(self.value(images), self.value(heats), n, ch, hw);
        Ok(self.push(
            vec![ch, h, w],
            Val::Owned(y),
            Op::Composite { images, heats, weights, n, ch, hw },
        ))
    }

    /// Reverse pass from a scalar loss. Returns dense per-parameter
    /// gradients; parameters not reached by the graph get zeros.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradStore<R>, NnError> {
        if self.spent {
            return Err(NnError::BackwardTwice);
        }
        if self.shape(loss) != [1] {
            return Err(NnError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.spent = true;

        let nodes = &self.nodes;
        let params = self.params;
        let mut grads: Vec<Option<Vec<R>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![R::ONE]);

        for i in (0..=loss.0).rev() {
            // Take the buffer to sidestep aliasing with input-grad updates;
            // restored below so leaf gradients survive to extraction.
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, cfg, n, ci, h, wd, co } => {
                    let numel_x = nodes[x.0].shape.iter().product();
                    let numel_w = nodes[w.0].shape.iter().product();
                    let numel_b = nodes[b.0].shape.iter().product();
                    let mut gx = std::mem::take(grad_buf(&mut grads, *x, numel_x));
                    let mut gw = std::mem::take(grad_buf(&mut grads, *w, numel_w));
                    let mut gb = std::mem::take(grad_buf(&mut grads, *b, numel_b));
                    kernels::conv2d_bwd(
                        value_of(nodes, params, *x),
                        *n,
                        *ci,
                        *h,
                        *wd,
                        value_of(nodes, params, *w),
                        *co,
                        *cfg,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[x.0] = Some(gx);
                    grads[w.0] = Some(gw);
                    grads[b.0] = Some(gb);
                }
                Op::ConvT2d { x, w, b, cfg, n, ci, h, wd, co } => {
                    let numel_x = nodes[x.0].shape.iter().product();
                    let numel_w = nodes[w.0].shape.iter().product();
                    let numel_b = nodes[b.0].shape.iter().product();
                    let mut gx = std::mem::take(grad_buf(&mut grads, *x, numel_x));
                    let mut gw = std::mem::take(grad_buf(&mut grads, *w, numel_w));
                    let mut gb = std::mem::take(grad_buf(&mut grads, *b, numel_b));
                    kernels::convt2d_bwd(
                        value_of(nodes, params, *x),
                        *n,
                        *ci,
                        *h,
                        *wd,
                        value_of(nodes, params, *w),
                        *co,
                        *cfg,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[x.0] = Some(gx);
                    grads[w.0] = Some(gw);
                    grads[b.0] = Some(gb);
                }
                Op::Linear { x, w, b, n, din, dout } => {
                    let numel_x = n * din;
                    let numel_w = dout * din;
                    let mut gx = std::mem::take(grad_buf(&mut grads, *x, numel_x));
                    let mut gw = std::mem::take(grad_buf(&mut grads, *w, numel_w));
                    let mut gb = std::mem::take(grad_buf(&mut grads, *b, *dout));
                    kernels::linear_bwd(
                        value_of(nodes, params, *x),
                        *n,
                        *din,
                        value_of(nodes, params, *w),
                        *dout,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    grads[x.0] = Some(gx);
                    grads[w.0] = Some(gw);
                    grads[b.0] = Some(gb);
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = value_of(nodes, params, *x);
                    let gx = grad_buf(&mut grads, *x, xv.len());
                    kernels::leaky_relu_bwd(xv, *slope, &g, gx);
                }
                Op::Sigmoid { x } => {
                    let yv = match &node.val {
                        Val::Owned(v) => v.as_slice(),
                        Val::Param(_) => unreachable!(),
                    };
                    let gx = grad_buf(&mut grads, *x, yv.len());
                    kernels::sigmoid_bwd(yv, &g, gx);
                }
                Op::Add { a, b } => {
                    for id in [a, b] {
                        let gx = grad_buf(&mut grads, *id, g.len());
                        for (o, &v) in gx.iter_mut().zip(&g) {
                            *o += v;
                        }
                    }
                }
                Op::Reshape { x } => {
                    let gx = grad_buf(&mut grads, *x, g.len());
                    for (o, &v) in gx.iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                Op::SelectRow { x, row, d } => {
                    let numel: usize = nodes[x.0].shape.iter().product();
                    let gx = grad_buf(&mut grads, *x, numel);
                    for (o, &v) in gx[row * d..(row + 1) * d].iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                Op::PairConcat { x, n, d } => {
                    let gx = grad_buf(&mut grads, *x, n * d);
                    for (r, (k, j)) in pair_rows(*n).enumerate() {
                        let head = &g[r * 2 * d..r * 2 * d + d];
                        let tail = &g[r * 2 * d + d..(r + 1) * 2 * d];
                        for (o, &v) in gx[k * d..(k + 1) * d].iter_mut().zip(head) {
                            *o += v;
                        }
                        for (o, &v) in gx[j * d..(j + 1) * d].iter_mut().zip(tail) {
                            *o += v;
                        }
                    }
                }
                Op::PairSumRows { x, n, d } => {
                    let rows = n.saturating_sub(1) * n;
                    let gx = grad_buf(&mut grads, *x, rows * d);
                    for (r, (k, _)) in pair_rows(*n).enumerate() {
                        for (o, &v) in gx[r * d..(r + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                            *o += v;
                        }
                    }
                }
                Op::Scale { x, k } => {
                    let numel: usize = nodes[x.0].shape.iter().product();
                    let gx = grad_buf(&mut grads, *x, numel);
                    for (o, &v) in gx.iter_mut().zip(&g) {
                        *o = k.mul_add(v, *o);
                    }
                }
                Op::AddScalars { xs } => {
                    for &x in xs {
                        grad_buf(&mut grads, x, 1)[0] += g[0];
                    }
                }
                Op::SumAll { x } => {
                    let numel: usize = nodes[x.0].shape.iter().product();
                    let gx = grad_buf(&mut grads, *x, numel);
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::Mse { pred, target } => {
                    let pv = value_of(nodes, params, *pred);
                    let gx = grad_buf(&mut grads, *pred, pv.len());
                    let scale = g[0] * R::from_f64(2.0 / pv.len() as f64);
                    for i in 0..pv.len() {
                        gx[i] = scale.mul_add(pv[i] - target[i], gx[i]);
                    }
                }
                Op::Composite { images, heats, weights, n, ch, hw } => {
                    let iv = value_of(nodes, params, *images);
                    let yv = match &node.val {
                        Val::Owned(v) => v.as_slice(),
                        Val::Param(_) => unreachable!(),
                    };
                    let mut gi = std::mem::take(grad_buf(&mut grads, *images, n * ch * hw));
                    {
                        // d out(c,p) / d image_k(c,p) = w_k(p)
                        for k in 0..*n {
                            let wk = &weights[k * hw..(k + 1) * hw];
                            for c in 0..*ch {
                                let gout = &g[c * hw..(c + 1) * hw];
                                let gim = &mut gi[(k * ch + c) * hw..(k * ch + c + 1) * hw];
                                for p in 0..*hw {
                                    gim[p] = wk[p].mul_add(gout[p], gim[p]);
                                }
                            }
                        }
                    }
                    grads[images.0] = Some(gi);
                    // d out(c,p) / d heat_k(p) = -w_k(p)·(image_k(c,p) - out(c,p))
                    let gh = grad_buf(&mut grads, *heats, n * hw);
                    for k in 0..*n {
                        let wk = &weights[k * hw..(k + 1) * hw];
                        let ghk = &mut gh[k * hw..(k + 1) * hw];
                        for c in 0..*ch {
                            let gout = &g[c * hw..(c + 1) * hw];
                            let img = &iv[(k * ch + c) * hw..(k * ch + c + 1) * hw];
                            let out = &yv[c * hw..(c + 1) * hw];
                            for p in 0..*hw {
                                ghk[p] -= gout[p] * wk[p] * (img[p] - out[p]);
                            }
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }

        // Materialize dense parameter gradients; untouched parameters get zeros.
        let mut out: Vec<Vec<R>> = Vec::with_capacity(params.len());
        for (pid, _, t) in params.iter() {
            match self.param_nodes[pid] {
                Some(node) => match grads[node.0].take() {
                    Some(g) => out.push(g),
                    None => out.push(vec![R::ZERO; t.numel()]),
                },
                None => out.push(vec![R::ZERO; t.numel()]),
            }
        }
        Ok(GradStore::from_parts(out))
    }

    /// Clears the recorded graph so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.param_nodes = vec![None; self.params.len()];
        self.spent = false;
    }
}

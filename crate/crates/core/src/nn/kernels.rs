//! Shared numeric kernels. Both the autodiff tape and the inference-only
//! forward paths call into these, so the two routes produce identical bits.
//!
//! Convolutions go through im2col + GEMM. All loops run in a fixed order;
//! given the same inputs the outputs are bit-identical on the same build.

use super::real::Real;

/// Square-kernel convolution configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCfg {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvCfg {
    pub fn out_size(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.pad;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

/// Transposed-convolution configuration. `out_pad` extends only the
/// bottom/right edge, as in the usual strided-deconvolution formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTCfg {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl ConvTCfg {
    pub fn out_size(&self, input: usize) -> Option<usize> {
        let full = (input - 1) * self.stride + self.kernel + self.out_pad;
        if full < 2 * self.pad {
            return None;
        }
        Some(full - 2 * self.pad)
    }

    fn full_size(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.kernel
    }
}

/// c += a · b with a: [m,k], b: [k,n], c: [m,n], all row-major.
pub fn gemm<R: Real>(m: usize, k: usize, n: usize, a: &[R], b: &[R], c: &mut [R]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        R::gemm_strided(
            m, k, n,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// c += a · bᵀ with a: [m,k], b: [n,k], c: [m,n].
pub fn gemm_bt<R: Real>(m: usize, k: usize, n: usize, a: &[R], b: &[R], c: &mut [R]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        R::gemm_strided(
            m, k, n,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// c += aᵀ · b with a: [k,m], b: [k,n], c: [m,n].
pub fn gemm_at<R: Real>(m: usize, k: usize, n: usize, a: &[R], b: &[R], c: &mut [R]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        R::gemm_strided(
            m, k, n,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Unfolds one image [ci,h,w] into patch columns [ci·k·k, oh·ow].
pub fn im2col<R: Real>(x: &[R], ci: usize, h: usize, w: usize, cfg: ConvCfg, cols: &mut [R]) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("im2col: bad height");
    let ow = cfg.out_size(w).expect("im2col: bad width");
    debug_assert_eq!(cols.len(), ci * k * k * oh * ow);
    let mut row = 0;
    for c in 0..ci {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ki) as isize - cfg.pad as isize;
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        for v in dst_row.iter_mut() {
                            *v = R::ZERO;
                        }
                        continue;
                    }
                    let src_row = &plane[(iy as usize) * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * cfg.stride + kj) as isize - cfg.pad as isize;
                        dst_row[ox] = if ix < 0 || ix >= w as isize {
                            R::ZERO
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into an image.
pub fn col2im_add<R: Real>(cols: &[R], ci: usize, h: usize, w: usize, cfg: ConvCfg, x: &mut [R]) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("col2im: bad height");
    let ow = cfg.out_size(w).expect("col2im: bad width");
    debug_assert_eq!(cols.len(), ci * k * k * oh * ow);
    let mut row = 0;
    for c in 0..ci {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ki) as isize - cfg.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[(iy as usize) * w..(iy as usize + 1) * w];
                    let src_row = &src[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * cfg.stride + kj) as isize - cfg.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src_row[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched convolution forward. x: [n,ci,h,w], w: [co,ci,k,k], b: [co],
/// y: [n,co,oh,ow] (overwritten).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_fwd<R: Real>(
    x: &[R],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[R],
    bias: &[R],
    co: usize,
    cfg: ConvCfg,
    y: &mut [R],
) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("conv2d: bad height");
    let ow = cfg.out_size(w).expect("conv2d: bad width");
    let ckk = ci * k * k;
    let ohow = oh * ow;
    debug_assert_eq!(y.len(), n * co * ohow);
    let mut cols = vec![R::ZERO; ckk * ohow];
    for img in 0..n {
        im2col(&x[img * ci * h * w..], ci, h, w, cfg, &mut cols);
        let yi = &mut y[img * co * ohow..(img + 1) * co * ohow];
        for (c, out_plane) in yi.chunks_exact_mut(ohow).enumerate() {
            let bv = bias[c];
            for v in out_plane.iter_mut() {
                *v = bv;
            }
        }
        gemm(co, ckk, ohow, weight, &cols, yi);
    }
}

/// Batched convolution backward; accumulates into gx/gw/gb.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd<R: Real>(
    x: &[R],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[R],
    co: usize,
    cfg: ConvCfg,
    gy: &[R],
    gx: &mut [R],
    gw: &mut [R],
    gb: &mut [R],
) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("conv2d_bwd: bad height");
    let ow = cfg.out_size(w).expect("conv2d_bwd: bad width");
    let ckk = ci * k * k;
    let ohow = oh * ow;
    let mut cols = vec![R::ZERO; ckk * ohow];
    let mut gcols = vec![R::ZERO; ckk * ohow];
    for img in 0..n {
        let gyi = &gy[img * co * ohow..(img + 1) * co * ohow];
        for c in 0..co {
            let mut s = R::ZERO;
            for &v in &gyi[c * ohow..(c + 1) * ohow] {
                s += v;
            }
            gb[c] += s;
        }
        im2col(&x[img * ci * h * w..], ci, h, w, cfg, &mut cols);
        gemm_bt(co, ohow, ckk, gyi, &cols, gw);
        for v in gcols.iter_mut() {
            *v = R::ZERO;
        }
        gemm_at(ckk, co, ohow, weight, gyi, &mut gcols);
        col2im_add(&gcols, ci, h, w, cfg, &mut gx[img * ci * h * w..(img + 1) * ci * h * w]);
    }
}

/// Batched transposed convolution forward. x: [n,ci,h,w],
/// w: [ci,co,k,k], b: [co], y: [n,co,oh,ow] (overwritten).
#[allow(clippy::too_many_arguments)]
pub fn convt2d_fwd<R: Real>(
    x: &[R],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[R],
    bias: &[R],
    co: usize,
    cfg: ConvTCfg,
    y: &mut [R],
) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("convt2d: bad height");
    let ow = cfg.out_size(w).expect("convt2d: bad width");
    let fh = cfg.full_size(h);
    let fw = cfg.full_size(w);
    let cokk = co * k * k;
    let hw = h * w;
    debug_assert_eq!(y.len(), n * co * oh * ow);
    let mut cols = vec![R::ZERO; cokk * hw];
    let mut full = vec![R::ZERO; co * fh * fw];
    for img in 0..n {
        for v in cols.iter_mut() {
            *v = R::ZERO;
        }
        for v in full.iter_mut() {
            *v = R::ZERO;
        }
        gemm_at(cokk, ci, hw, weight, &x[img * ci * hw..(img + 1) * ci * hw], &mut cols);
        // Scatter each input position's k×k patch at its strided location.
        for c in 0..co {
            let plane = &mut full[c * fh * fw..(c + 1) * fh * fw];
            for ki in 0..k {
                for kj in 0..k {
                    let src = &cols[(c * k * k + ki * k + kj) * hw..][..hw];
                    for iy in 0..h {
                        let fy = iy * cfg.stride + ki;
                        let dst_row = &mut plane[fy * fw..(fy + 1) * fw];
                        let src_row = &src[iy * w..(iy + 1) * w];
                        for ix in 0..w {
                            dst_row[ix * cfg.stride + kj] += src_row[ix];
                        }
                    }
                }
            }
        }
        let yi = &mut y[img * co * oh * ow..(img + 1) * co * oh * ow];
        for c in 0..co {
            let plane = &full[c * fh * fw..(c + 1) * fh * fw];
            let out_plane = &mut yi[c * oh * ow..(c + 1) * oh * ow];
            let bv = bias[c];
            for yy in 0..oh {
                let fy = yy + cfg.pad;
                let out_row = &mut out_plane[yy * ow..(yy + 1) * ow];
                for xx in 0..ow {
                    let fx = xx + cfg.pad;
                    out_row[xx] = if fy < fh && fx < fw {
                        plane[fy * fw + fx] + bv
                    } else {
                        bv
                    };
                }
            }
        }
    }
}

/// Batched transposed convolution backward; accumulates into gx/gw/gb.
#[allow(clippy::too_many_arguments)]
pub fn convt2d_bwd<R: Real>(
    x: &[R],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[R],
    co: usize,
    cfg: ConvTCfg,
    gy: &[R],
    gx: &mut [R],
    gw: &mut [R],
    gb: &mut [R],
) {
    let k = cfg.kernel;
    let oh = cfg.out_size(h).expect("convt2d_bwd: bad height");
    let ow = cfg.out_size(w).expect("convt2d_bwd: bad width");
    let fh = cfg.full_size(h);
    let fw = cfg.full_size(w);
    let cokk = co * k * k;
    let hw = h * w;
    let mut gfull = vec![R::ZERO; co * fh * fw];
    let mut gcols = vec![R::ZERO; cokk * hw];
    for img in 0..n {
        let gyi = &gy[img * co * oh * ow..(img + 1) * co * oh * ow];
        for v in gfull.iter_mut() {
            *v = R::ZERO;
        }
        for c in 0..co {
            let mut s = R::ZERO;
            let gplane = &gyi[c * oh * ow..(c + 1) * oh * ow];
            let fplane = &mut gfull[c * fh * fw..(c + 1) * fh * fw];
            for yy in 0..oh {
                let fy = yy + cfg.pad;
                if fy >= fh {
                    for &v in &gplane[yy * ow..(yy + 1) * ow] {
                        s += v;
                    }
                    continue;
                }
                let grow = &gplane[yy * ow..(yy + 1) * ow];
                let frow = &mut fplane[fy * fw..(fy + 1) * fw];
                for xx in 0..ow {
                    s += grow[xx];
                    let fx = xx + cfg.pad;
                    if fx < fw {
                        frow[fx] = grow[xx];
                    }
                }
            }
            gb[c] += s;
        }
        // Gather the scatter pattern back into column form.
        for c in 0..co {
            let fplane = &gfull[c * fh * fw..(c + 1) * fh * fw];
            for ki in 0..k {
                for kj in 0..k {
                    let dst = &mut gcols[(c * k * k + ki * k + kj) * hw..][..hw];
                    for iy in 0..h {
                        let fy = iy * cfg.stride + ki;
                        let frow = &fplane[fy * fw..(fy + 1) * fw];
                        let dst_row = &mut dst[iy * w..(iy + 1) * w];
                        for ix in 0..w {
                            dst_row[ix] = frow[ix * cfg.stride + kj];
                        }
                    }
                }
            }
        }
        let xi = &x[img * ci * hw..(img + 1) * ci * hw];
        gemm(ci, cokk, hw, weight, &gcols, &mut gx[img * ci * hw..(img + 1) * ci * hw]);
        gemm_bt(ci, hw, cokk, xi, &gcols, gw);
    }
}

/// y = x · wᵀ + b with x: [n,din], w: [dout,din], b: [dout].
pub fn linear_fwd<R: Real>(
    x: &[R],
    n: usize,
    din: usize,
    weight: &[R],
    bias: &[R],
    dout: usize,
    y: &mut [R],
) {
    debug_assert_eq!(y.len(), n * dout);
    for i in 0..n {
        let yrow = &mut y[i * dout..(i + 1) * dout];
        yrow.copy_from_slice(bias);
    }
    gemm_bt(n, din, dout, x, weight, y);
}

/// Accumulates linear-layer gradients into gx/gw/gb.
#[allow(clippy::too_many_arguments)]
pub fn linear_bwd<R: Real>(
    x: &[R],
    n: usize,
    din: usize,
    weight: &[R],
    dout: usize,
    gy: &[R],
    gx: &mut [R],
    gw: &mut [R],
    gb: &mut [R],
) {
    gemm(n, dout, din, gy, weight, gx);
    gemm_at(dout, n, din, gy, x, gw);
    for i in 0..n {
        let grow = &gy[i * dout..(i + 1) * dout];
        for o in 0..dout {
            gb[o] += grow[o];
        }
    }
}

pub fn leaky_relu_fwd<R: Real>(x: &[R], slope: R, y: &mut [R]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = if xi >= R::ZERO { xi } else { slope * xi };
    }
}

pub fn leaky_relu_bwd<R: Real>(x: &[R], slope: R, gy: &[R], gx: &mut [R]) {
    for i in 0..x.len() {
        gx[i] += if x[i] >= R::ZERO { gy[i] } else { slope * gy[i] };
    }
}

pub fn sigmoid_fwd<R: Real>(x: &[R], y: &mut [R]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = R::ONE / (R::ONE + (-xi).exp());
    }
}

/// Accumulates a set of equal-length rows into `out` in a canonical order:
/// rows are sorted by their contents (total order) before summation, so the
/// result is bit-identical no matter how the caller enumerated them.
pub fn content_sorted_accumulate<R: Real>(rows: &mut Vec<&[R]>, out: &mut [R]) {
    rows.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b.iter()) {
            let o = x.to_f64().total_cmp(&y.to_f64());
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    for row in rows.iter() {
        for (o, &t) in out.iter_mut().zip(*row) {
            *o += t;
        }
    }
}

/// Soft depth compositing shared by the tape op and the inference path.
/// Per-pixel weights are the stabilized normalized exponentials of the
/// negated heatmaps; the composite is the weighted sum of object images.
/// Returns the [ch·hw] image and the [n·hw] weights.
pub fn composite_fwd<R: Real>(
    images: &[R],
    heats: &[R],
    n: usize,
    ch: usize,
    hw: usize,
) -> (Vec<R>, Vec<R>) {
    let mut weights = vec![R::ZERO; n * hw];
    for p in 0..hw {
        let mut zmax = -heats[p];
        for k in 1..n {
            zmax = zmax.max(-heats[k * hw + p]);
        }
        let mut denom = R::ZERO;
        for k in 0..n {
            let e = (-heats[k * hw + p] - zmax).exp();
            weights[k * hw + p] = e;
            denom += e;
        }
        for k in 0..n {
            weights[k * hw + p] /= denom;
        }
    }
    let mut out = vec![R::ZERO; ch * hw];
    for k in 0..n {
        let wk = &weights[k * hw..(k + 1) * hw];
        for c in 0..ch {
            let img = &images[(k * ch + c) * hw..(k * ch + c + 1) * hw];
            let dst = &mut out[c * hw..(c + 1) * hw];
            for p in 0..hw {
                dst[p] = wk[p].mul_add(img[p], dst[p]);
            }
        }
    }
    (out, weights)
}

/// Backward from the stored output: dy/dx = y(1-y).
pub fn sigmoid_bwd<R: Real>(y: &[R], gy: &[R], gx: &mut [R]) {
    for i in 0..y.len() {
        gx[i] += gy[i] * y[i] * (R::ONE - y[i]);
    }
}

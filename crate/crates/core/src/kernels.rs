//! Forward and backward compute kernels. Everything here is shape-checked by
//! the caller-facing wrappers in `ops`/`tape`; the kernels themselves take
//! validated geometry.
//!
//! Determinism: batch elements are processed independently (parallel under
//! the `std` feature), and every cross-element reduction either runs in a
//! fixed sequential order or sums a fixed number of per-chunk partials
//! ([`GRAD_CHUNKS`], independent of thread count) in chunk order. Reductions
//! accumulate in f64.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{Element, Tensor};

/// Number of partial-sum chunks for weight-gradient reductions over the
/// batch. Fixed (not tied to thread count) so results are identical no
/// matter how many workers run.
const GRAD_CHUNKS: usize = 8;

/// Probability floor inside logarithms of the cross-entropy family, per the
/// loss contracts: log arguments are clamped below at 1e-7.
const LOG_FLOOR: f64 = 1e-7;

// ---------------------------------------------------------------------------
// parallel helpers

/// Runs `f(x_chunk, y_chunk)` over zipped equal-count chunkings of `xs` and
/// `ys`; chunks are disjoint so this parallelizes without reductions.
#[cfg(feature = "std")]
pub(crate) fn zip_chunks<T: Element>(
    xs: &[T],
    xn: usize,
    ys: &mut [T],
    yn: usize,
    f: impl Fn(&[T], &mut [T]) + Sync,
) {
    use rayon::prelude::*;
    debug_assert_eq!(xs.len() / xn, ys.len() / yn);
    ys.par_chunks_mut(yn).zip(xs.par_chunks(xn)).for_each(|(y, x)| f(x, y));
}

#[cfg(not(feature = "std"))]
pub(crate) fn zip_chunks<T: Element>(
    xs: &[T],
    xn: usize,
    ys: &mut [T],
    yn: usize,
    f: impl Fn(&[T], &mut [T]) + Sync,
) {
    debug_assert_eq!(xs.len() / xn, ys.len() / yn);
    for (y, x) in ys.chunks_mut(yn).zip(xs.chunks(xn)) {
        f(x, y);
    }
}

/// Map over disjoint output chunks indexed 0..n (used for per-channel work).
#[cfg(feature = "std")]
pub(crate) fn for_each_chunk<T: Element>(
    ys: &mut [T],
    yn: usize,
    f: impl Fn(usize, &mut [T]) + Sync,
) {
    use rayon::prelude::*;
    ys.par_chunks_mut(yn).enumerate().for_each(|(i, y)| f(i, y));
}

#[cfg(not(feature = "std"))]
pub(crate) fn for_each_chunk<T: Element>(
    ys: &mut [T],
    yn: usize,
    f: impl Fn(usize, &mut [T]) + Sync,
) {
    for (i, y) in ys.chunks_mut(yn).enumerate() {
        f(i, y);
    }
}

fn check_finite<T: Element>(t: &Tensor<T>, op: &'static str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(CoreError::NonFinite { op })
    }
}

// ---------------------------------------------------------------------------
// convolution geometry

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub b: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Geometry for conv2d: input [B,Ci,H,W], weight [Co,Ci,k,k].
pub(crate) fn conv_geom(
    x_shape: &[usize],
    w_shape: &[usize],
    s: usize,
    p: usize,
) -> Result<ConvGeom> {
    const OP: &str = "conv2d";
    if x_shape.len() != 4 {
        return Err(CoreError::Shape { op: OP, detail: format!("input must be [B,C,H,W], got {x_shape:?}") });
    }
    if w_shape.len() != 4 || w_shape[2] != w_shape[3] {
        return Err(CoreError::Shape { op: OP, detail: format!("weight must be [Co,Ci,k,k], got {w_shape:?}") });
    }
    if s == 0 {
        return Err(CoreError::InvalidArg { op: OP, detail: "stride must be ≥ 1".into() });
    }
    let (b, ci, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (co, wci, k) = (w_shape[0], w_shape[1], w_shape[2]);
    if ci != wci {
        return Err(CoreError::Shape {
            op: OP,
            detail: format!("input has {ci} channels, weight expects {wci}"),
        });
    }
    if h + 2 * p < k || w + 2 * p < k {
        return Err(CoreError::Shape {
            op: OP,
            detail: format!("kernel {k} exceeds padded input {}x{}", h + 2 * p, w + 2 * p),
        });
    }
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (w + 2 * p - k) / s + 1;
    Ok(ConvGeom { b, ci, h, w, co, k, s, p, oh, ow })
}

/// Geometry for conv_transpose2d: input [B,Ci,H,W], weight [Ci,Co,k,k].
/// Returned geometry is phrased as the *adjoint* conv (mapping output back to
/// input): `oh/ow` are the transposed-conv output extents and `h/w` the input
/// extents, so the same im2col/col2im routines serve both directions.
pub(crate) fn conv_transpose_geom(
    x_shape: &[usize],
    w_shape: &[usize],
    s: usize,
    p: usize,
) -> Result<ConvGeom> {
    const OP: &str = "conv_transpose2d";
    if x_shape.len() != 4 {
        return Err(CoreError::Shape { op: OP, detail: format!("input must be [B,C,H,W], got {x_shape:?}") });
    }
    if w_shape.len() != 4 || w_shape[2] != w_shape[3] {
        return Err(CoreError::Shape { op: OP, detail: format!("weight must be [Ci,Co,k,k], got {w_shape:?}") });
    }
    if s == 0 {
        return Err(CoreError::InvalidArg { op: OP, detail: "stride must be ≥ 1".into() });
    }
    let (b, ci, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (wci, co, k) = (w_shape[0], w_shape[1], w_shape[2]);
    if ci != wci {
        return Err(CoreError::Shape {
            op: OP,
            detail: format!("input has {ci} channels, weight expects {wci}"),
        });
    }
    let oh_signed = (h as isize - 1) * s as isize - 2 * p as isize + k as isize;
    let ow_signed = (w as isize - 1) * s as isize - 2 * p as isize + k as isize;
    if oh_signed < 1 || ow_signed < 1 {
        return Err(CoreError::Shape {
            op: OP,
            detail: format!("computed output extent {oh_signed}x{ow_signed} is not positive"),
        });
    }
    Ok(ConvGeom { b, ci, h, w, co, k, s, p, oh: oh_signed as usize, ow: ow_signed as usize })
}

// ---------------------------------------------------------------------------
// im2col / col2im
//
// col layout: rows indexed by (c, ki, kj), columns by (oy, ox); the "image"
// side has geometry (c: cols_c, ih, iw) and the "patch" side (oh, ow) with
// stride s, padding p. For conv2d the image side is the input; for the
// backward/transpose directions the roles swap but the arithmetic is shared.

#[allow(clippy::too_many_arguments)]
fn im2col<T: Element>(
    x: &[T],
    cols_c: usize,
    ih: usize,
    iw: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    debug_assert_eq!(col.len(), cols_c * k * k * oh * ow);
    let plane = ih * iw;
    let ohw = oh * ow;
    for c in 0..cols_c {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * ohw;
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= ih as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = c * plane + iy as usize * iw;
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kj) as isize - p as isize;
                        *v = if ix >= 0 && ix < iw as isize {
                            x[src_row + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds col back into the image buffer.
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Element>(
    col: &[T],
    cols_c: usize,
    ih: usize,
    iw: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
    x: &mut [T],
) {
    debug_assert_eq!(col.len(), cols_c * k * k * oh * ow);
    let plane = ih * iw;
    let ohw = oh * ow;
    for c in 0..cols_c {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * ohw;
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= ih as isize {
                        continue;
                    }
                    let dst_row = c * plane + iy as usize * iw;
                    let src = &col[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * s + kj) as isize - p as isize;
                        if ix >= 0 && ix < iw as isize {
                            x[dst_row + ix as usize] = x[dst_row + ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d

pub(crate) fn conv2d_fwd<T: Element>(x: &Tensor<T>, w: &Tensor<T>, g: &ConvGeom) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(&[g.b, g.co, g.oh, g.ow]);
    let ck2 = g.ci * g.k * g.k;
    let ohw = g.oh * g.ow;
    let (xn, yn) = (g.ci * g.h * g.w, g.co * ohw);
    let geom = *g;
    let wd = w.data();
    zip_chunks(x.data(), xn, out.data_mut(), yn, |xb, ob| {
        let mut col = vec![T::zero(); ck2 * ohw];
        im2col(xb, geom.ci, geom.h, geom.w, geom.k, geom.s, geom.p, geom.oh, geom.ow, &mut col);
        gemm_nn(geom.co, ck2, ohw, T::one(), wd, &col, T::zero(), ob);
    });
    check_finite(&out, "conv2d")?;
    Ok(out)
}

/// Returns (dx, dw); either side can be skipped when its consumer does not
/// require gradients.
pub(crate) fn conv2d_bwd<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &ConvGeom,
    dy: &Tensor<T>,
    need_dx: bool,
    need_dw: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let ck2 = g.ci * g.k * g.k;
    let ohw = g.oh * g.ow;
    let (xn, yn) = (g.ci * g.h * g.w, g.co * ohw);
    let geom = *g;

    let dx = if need_dx {
        let mut dx = Tensor::zeros(&[g.b, g.ci, g.h, g.w]);
        let wd = w.data();
        zip_chunks(dy.data(), yn, dx.data_mut(), xn, |dyb, dxb| {
            let mut dcol = vec![T::zero(); ck2 * ohw];
            gemm_tn(ck2, geom.co, ohw, T::one(), wd, dyb, T::zero(), &mut dcol);
            col2im_add(&dcol, geom.ci, geom.h, geom.w, geom.k, geom.s, geom.p, geom.oh, geom.ow, dxb);
        });
        check_finite(&dx, "conv2d")?;
        Some(dx)
    } else {
        None
    };

    let dw = if need_dw {
        // Fixed-chunk partial sums over the batch keep the reduction order
        // independent of scheduling.
        let chunk_len = g.b.div_ceil(GRAD_CHUNKS);
        let wnum = g.co * ck2;
        let mut partials = vec![T::zero(); GRAD_CHUNKS * wnum];
        let xd = x.data();
        let dyd = dy.data();
        for_each_chunk(&mut partials, wnum, |ci, part| {
            let lo = ci * chunk_len;
            let hi = ((ci + 1) * chunk_len).min(geom.b);
            let mut col = vec![T::zero(); ck2 * ohw];
            for bi in lo..hi {
                im2col(&xd[bi * xn..(bi + 1) * xn], geom.ci, geom.h, geom.w, geom.k, geom.s, geom.p, geom.oh, geom.ow, &mut col);
                gemm_nt(geom.co, ohw, ck2, T::one(), &dyd[bi * yn..(bi + 1) * yn], &col, T::one(), part);
            }
        });
        let mut dw = Tensor::zeros(w.shape());
        for part in partials.chunks(wnum) {
            for (d, &s) in dw.data_mut().iter_mut().zip(part) {
                *d = *d + s;
            }
        }
        check_finite(&dw, "conv2d")?;
        Some(dw)
    } else {
        None
    };

    Ok((dx, dw))
}

// ---------------------------------------------------------------------------
// conv_transpose2d

pub(crate) fn conv_transpose2d_fwd<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &ConvGeom,
) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(&[g.b, g.co, g.oh, g.ow]);
    let ck2 = g.co * g.k * g.k;
    let hw = g.h * g.w;
    let (xn, yn) = (g.ci * hw, g.co * g.oh * g.ow);
    let geom = *g;
    let wd = w.data();
    zip_chunks(x.data(), xn, out.data_mut(), yn, |xb, ob| {
        let mut col = vec![T::zero(); ck2 * hw];
        // col[Co·k², H·W] = Wᵀ[Co·k², Ci] · X[Ci, H·W], then scatter into the
        // (larger) output plane — exactly the adjoint of conv2d's gather.
        gemm_tn(ck2, geom.ci, hw, T::one(), wd, xb, T::zero(), &mut col);
        col2im_add(&col, geom.co, geom.oh, geom.ow, geom.k, geom.s, geom.p, geom.h, geom.w, ob);
    });
    check_finite(&out, "conv_transpose2d")?;
    Ok(out)
}

pub(crate) fn conv_transpose2d_bwd<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &ConvGeom,
    dy: &Tensor<T>,
    need_dx: bool,
    need_dw: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let ck2 = g.co * g.k * g.k;
    let hw = g.h * g.w;
    let (xn, yn) = (g.ci * hw, g.co * g.oh * g.ow);
    let geom = *g;

    let dx = if need_dx {
        // Gradient of a transposed conv is the matching forward conv.
        let mut dx = Tensor::zeros(&[g.b, g.ci, g.h, g.w]);
        let wd = w.data();
        zip_chunks(dy.data(), yn, dx.data_mut(), xn, |dyb, dxb| {
            let mut col = vec![T::zero(); ck2 * hw];
            im2col(dyb, geom.co, geom.oh, geom.ow, geom.k, geom.s, geom.p, geom.h, geom.w, &mut col);
            gemm_nn(geom.ci, ck2, hw, T::one(), wd, &col, T::zero(), dxb);
        });
        check_finite(&dx, "conv_transpose2d")?;
        Some(dx)
    } else {
        None
    };

    let dw = if need_dw {
        let chunk_len = g.b.div_ceil(GRAD_CHUNKS);
        let wnum = g.ci * ck2;
        let mut partials = vec![T::zero(); GRAD_CHUNKS * wnum];
        let xd = x.data();
        let dyd = dy.data();
        for_each_chunk(&mut partials, wnum, |ci, part| {
            let lo = ci * chunk_len;
            let hi = ((ci + 1) * chunk_len).min(geom.b);
            let mut col = vec![T::zero(); ck2 * hw];
            for bi in lo..hi {
                im2col(&dyd[bi * yn..(bi + 1) * yn], geom.co, geom.oh, geom.ow, geom.k, geom.s, geom.p, geom.h, geom.w, &mut col);
                gemm_nt(geom.ci, hw, ck2, T::one(), &xd[bi * xn..(bi + 1) * xn], &col, T::one(), part);
            }
        });
        let mut dw = Tensor::zeros(w.shape());
        for part in partials.chunks(wnum) {
            for (d, &s) in dw.data_mut().iter_mut().zip(part) {
                *d = *d + s;
            }
        }
        check_finite(&dw, "conv_transpose2d")?;
        Some(dw)
    } else {
        None
    };

    Ok((dx, dw))
}

// ---------------------------------------------------------------------------
// dense

/// y[B,m] = x[B,n]·Wᵀ + bias, W stored [m,n].
pub(crate) fn dense_fwd<T: Element>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, n) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];
    let mut out = Tensor::zeros(&[b, m]);
    gemm_nt(b, n, m, T::one(), x.data(), w.data(), T::zero(), out.data_mut());
    let bd = bias.data();
    for row in out.data_mut().chunks_mut(m) {
        for (o, &bv) in row.iter_mut().zip(bd) {
            *o = *o + bv;
        }
    }
    check_finite(&out, "dense")?;
    Ok(out)
}

pub(crate) fn dense_bwd<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
    need_dw: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (b, n) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];

    let dx = if need_dx {
        let mut dx = Tensor::zeros(&[b, n]);
        gemm_nn(b, m, n, T::one(), dy.data(), w.data(), T::zero(), dx.data_mut());
        check_finite(&dx, "dense")?;
        Some(dx)
    } else {
        None
    };

    let (dw, db) = if need_dw {
        let mut dw = Tensor::zeros(&[m, n]);
        gemm_tn(m, b, n, T::one(), dy.data(), x.data(), T::zero(), dw.data_mut());
        let mut db = vec![0f64; m];
        for row in dy.data().chunks(m) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v.to_f64();
            }
        }
        let db = Tensor::new(&[m], db.into_iter().map(T::from_f64).collect()).expect("db shape");
        check_finite(&dw, "dense")?;
        check_finite(&db, "dense")?;
        (Some(dw), Some(db))
    } else {
        (None, None)
    };

    Ok((dx, dw, db))
}

// ---------------------------------------------------------------------------
// channel bias (convolutions carry no bias term themselves)

pub(crate) fn bias_channel_fwd<T: Element>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let c = x.shape()[1];
    let plane: usize = x.shape()[2..].iter().product();
    let mut out = x.clone();
    let bd = bias.data();
    for bc in out.data_mut().chunks_mut(c * plane) {
        for (ch, chunk) in bc.chunks_mut(plane).enumerate() {
            let bv = bd[ch];
            for v in chunk {
                *v = *v + bv;
            }
        }
    }
    check_finite(&out, "bias_channel")?;
    Ok(out)
}

pub(crate) fn bias_channel_bwd<T: Element>(dy: &Tensor<T>, c: usize) -> Result<Tensor<T>> {
    let plane: usize = dy.shape()[2..].iter().product();
    let mut db = vec![0f64; c];
    for bc in dy.data().chunks(c * plane) {
        for (ch, chunk) in bc.chunks(plane).enumerate() {
            let mut s = 0f64;
            for &v in chunk {
                s += v.to_f64();
            }
            db[ch] += s;
        }
    }
    let db = Tensor::new(&[c], db.into_iter().map(T::from_f64).collect()).expect("db shape");
    check_finite(&db, "bias_channel")?;
    Ok(db)
}

// ---------------------------------------------------------------------------
// batch norm

pub(crate) struct BnStats<T> {
    pub mean: Tensor<T>,
    pub inv_std: Tensor<T>,
    /// Unbiased batch variance, for the running-average update.
    pub var_unbiased: Tensor<T>,
}

/// Train-mode batch norm over [B,C,spatial...]: per-channel standardization
/// with batch statistics, then the affine (gamma, beta).
pub(crate) fn batchnorm_train_fwd<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnStats<T>)> {
    let b = x.shape()[0];
    let c = x.shape()[1];
    if b < 2 {
        return Err(CoreError::BatchTooSmall { op: "batchnorm" });
    }
    let plane: usize = x.shape()[2..].iter().product();
    let n = b * plane;
    let xd = x.data();

    let mut mean = vec![T::zero(); c];
    let mut inv_std = vec![T::zero(); c];
    let mut var_unb = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum = 0f64;
        let mut sumsq = 0f64;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for &v in &xd[base..base + plane] {
                let v = v.to_f64();
                sum += v;
                sumsq += v * v;
            }
        }
        let mu = sum / n as f64;
        let var = (sumsq / n as f64 - mu * mu).max(0.0);
        mean[ch] = T::from_f64(mu);
        inv_std[ch] = T::from_f64(1.0 / (var + eps).sqrt());
        var_unb[ch] = T::from_f64(var * n as f64 / (n as f64 - 1.0));
    }

    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    let gd = gamma.data();
    let bd = beta.data();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let (mu, is, g, be) = (mean[ch], inv_std[ch], gd[ch], bd[ch]);
            for (o, &v) in od[base..base + plane].iter_mut().zip(&xd[base..base + plane]) {
                *o = (v - mu) * is * g + be;
            }
        }
    }
    check_finite(&out, "batchnorm")?;
    Ok((
        out,
        BnStats {
            mean: Tensor::new(&[c], mean).expect("bn mean"),
            inv_std: Tensor::new(&[c], inv_std).expect("bn inv_std"),
            var_unbiased: Tensor::new(&[c], var_unb).expect("bn var"),
        },
    ))
}

/// Eval-mode batch norm: standardize with the provided running statistics.
pub(crate) fn batchnorm_eval_fwd<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let b = x.shape()[0];
    let c = x.shape()[1];
    let plane: usize = x.shape()[2..].iter().product();
    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    let xd = x.data();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let is = T::from_f64(1.0 / (running_var.data()[ch].to_f64() + eps).sqrt());
            let (mu, g, be) = (running_mean.data()[ch], gamma.data()[ch], beta.data()[ch]);
            for (o, &v) in od[base..base + plane].iter_mut().zip(&xd[base..base + plane]) {
                *o = (v - mu) * is * g + be;
            }
        }
    }
    check_finite(&out, "batchnorm")?;
    Ok(out)
}

/// Train-mode backward. Standard result with batch statistics:
/// dx = γ·s/n · (n·dy − Σdy − x̂·Σ(dy·x̂)), dγ = Σ dy·x̂, dβ = Σ dy.
pub(crate) fn batchnorm_train_bwd<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    mean: &Tensor<T>,
    inv_std: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let b = x.shape()[0];
    let c = x.shape()[1];
    let plane: usize = x.shape()[2..].iter().product();
    let n = (b * plane) as f64;
    let xd = x.data();
    let dyd = dy.data();

    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let mu = mean.data()[ch].to_f64();
        let is = inv_std.data()[ch].to_f64();
        let mut s1 = 0f64; // Σ dy
        let mut s2 = 0f64; // Σ dy·x̂
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let g = dyd[i].to_f64();
                s1 += g;
                s2 += g * (xd[i].to_f64() - mu) * is;
            }
        }
        dgamma[ch] = T::from_f64(s2);
        dbeta[ch] = T::from_f64(s1);
        let scale = gamma.data()[ch].to_f64() * is / n;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let g = dyd[i].to_f64();
                let xhat = (xd[i].to_f64() - mu) * is;
                dx.data_mut()[i] = T::from_f64(scale * (n * g - s1 - xhat * s2));
            }
        }
    }
    let dgamma = Tensor::new(&[c], dgamma).expect("bn dgamma");
    let dbeta = Tensor::new(&[c], dbeta).expect("bn dbeta");
    check_finite(&dx, "batchnorm")?;
    check_finite(&dgamma, "batchnorm")?;
    Ok((dx, dgamma, dbeta))
}

/// Eval-mode backward (running stats are constants, so this is a per-channel
/// affine map).
pub(crate) fn batchnorm_eval_bwd<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let b = x.shape()[0];
    let c = x.shape()[1];
    let plane: usize = x.shape()[2..].iter().product();
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = vec![0f64; c];
    let mut dbeta = vec![0f64; c];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let is = 1.0 / (running_var.data()[ch].to_f64() + eps).sqrt();
            let mu = running_mean.data()[ch].to_f64();
            let g = gamma.data()[ch].to_f64();
            for i in base..base + plane {
                let dyv = dy.data()[i].to_f64();
                dx.data_mut()[i] = T::from_f64(dyv * g * is);
                dgamma[ch] += dyv * (x.data()[i].to_f64() - mu) * is;
                dbeta[ch] += dyv;
            }
        }
    }
    let dgamma = Tensor::new(&[c], dgamma.into_iter().map(T::from_f64).collect()).expect("bn dgamma");
    let dbeta = Tensor::new(&[c], dbeta.into_iter().map(T::from_f64).collect()).expect("bn dbeta");
    check_finite(&dx, "batchnorm")?;
    Ok((dx, dgamma, dbeta))
}

// ---------------------------------------------------------------------------
// max pool

pub(crate) fn maxpool2d_fwd<T: Element>(
    x: &Tensor<T>,
    k: usize,
    s: usize,
) -> Result<(Tensor<T>, Vec<u32>)> {
    const OP: &str = "maxpool2d";
    if x.shape().len() != 4 {
        return Err(CoreError::Shape { op: OP, detail: format!("input must be [B,C,H,W], got {:?}", x.shape()) });
    }
    if s == 0 || k == 0 {
        return Err(CoreError::InvalidArg { op: OP, detail: "kernel and stride must be ≥ 1".into() });
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if k > h || k > w {
        return Err(CoreError::Shape { op: OP, detail: format!("window {k} exceeds input {h}x{w}") });
    }
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0u32; b * c * oh * ow];
    let xd = x.data();
    let od = out.data_mut();
    for bc in 0..b * c {
        let xbase = bc * h * w;
        let obase = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_idx = 0u32;
                // ties go to the first element in row-major scan order
                for ky in 0..k {
                    let row = xbase + (oy * s + ky) * w + ox * s;
                    for kx in 0..k {
                        let v = xd[row + kx];
                        if v > best {
                            best = v;
                            best_idx = ((oy * s + ky) * w + (ox * s + kx)) as u32;
                        }
                    }
                }
                od[obase + oy * ow + ox] = best;
                argmax[obase + oy * ow + ox] = best_idx;
            }
        }
    }
    check_finite(&out, OP)?;
    Ok((out, argmax))
}

pub(crate) fn maxpool2d_bwd<T: Element>(
    x_shape: &[usize],
    dy: &Tensor<T>,
    argmax: &[u32],
) -> Result<Tensor<T>> {
    let (h, w) = (x_shape[2], x_shape[3]);
    let plane_out: usize = dy.shape()[2] * dy.shape()[3];
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    for (bc, dyc) in dy.data().chunks(plane_out).enumerate() {
        let xbase = bc * h * w;
        let abase = bc * plane_out;
        for (i, &g) in dyc.iter().enumerate() {
            let idx = xbase + argmax[abase + i] as usize;
            dxd[idx] = dxd[idx] + g;
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// activations

pub(crate) fn relu_fwd<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_bwd<T: Element>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

pub(crate) fn leaky_relu_fwd<T: Element>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

pub(crate) fn leaky_relu_bwd<T: Element>(x: &Tensor<T>, slope: T, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *d = *d * slope;
        }
    }
    dx
}

pub(crate) fn sigmoid_fwd<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let out = x.map(|v| T::one() / (T::one() + (-v).exp()));
    check_finite(&out, "sigmoid")?;
    Ok(out)
}

/// Backward from the saved output: dy·y·(1−y).
pub(crate) fn sigmoid_bwd<T: Element>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
        *d = *d * yv * (T::one() - yv);
    }
    dx
}

/// Row-wise softmax over [B,C].
pub(crate) fn softmax_fwd<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().len() != 2 {
        return Err(CoreError::Shape {
            op: "softmax",
            detail: format!("expected [B,C], got {:?}", x.shape()),
        });
    }
    let c = x.shape()[1];
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let mut max = T::neg_infinity();
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += v.to_f64();
        }
        let inv = T::from_f64(1.0 / sum);
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
    check_finite(&out, "softmax")?;
    Ok(out)
}

/// dx = y ⊙ (dy − ⟨dy, y⟩) per row, from the saved output.
pub(crate) fn softmax_bwd<T: Element>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let c = y.shape()[1];
    let mut dx = Tensor::zeros(y.shape());
    for ((dxr, yr), dyr) in dx
        .data_mut()
        .chunks_mut(c)
        .zip(y.data().chunks(c))
        .zip(dy.data().chunks(c))
    {
        let mut dot = 0f64;
        for (&yv, &gv) in yr.iter().zip(dyr) {
            dot += yv.to_f64() * gv.to_f64();
        }
        let dot = T::from_f64(dot);
        for ((d, &yv), &gv) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d = yv * (gv - dot);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// reparametrization

/// sample = mu + exp(0.5·log_var) ⊙ eps, elementwise over [B,L].
pub(crate) fn reparam_fwd<T: Element>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    let half = T::from_f64(0.5);
    let mut out = mu.clone();
    for ((o, &lv), &e) in out.data_mut().iter_mut().zip(log_var.data()).zip(eps.data()) {
        *o = *o + (lv * half).exp() * e;
    }
    check_finite(&out, "reparametrize")?;
    Ok(out)
}

pub(crate) fn reparam_bwd<T: Element>(
    log_var: &Tensor<T>,
    eps: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let half = T::from_f64(0.5);
    let dmu = dy.clone();
    let mut dlv = dy.clone();
    for ((d, &lv), &e) in dlv.data_mut().iter_mut().zip(log_var.data()).zip(eps.data()) {
        *d = *d * e * half * (lv * half).exp();
    }
    (dmu, dlv)
}

// ---------------------------------------------------------------------------
// losses
//
// All loss forwards reduce in f64 insertion order. Logs are floored at
// LOG_FLOOR so a saturated probability can't produce −∞; the floor is applied
// inside the log argument only, which keeps exact-zero loss for exact
// reconstructions (0·log 0 terms vanish by their zero factor).

/// Pixelwise binary cross-entropy, summed over all non-batch dims, mean over
/// the batch (dim 0).
pub(crate) fn bce_sum_mean_fwd<T: Element>(p: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let b = p.shape()[0];
    let per = p.numel() / b;
    let mut total = 0f64;
    for (pr, tr) in p.data().chunks(per).zip(target.data().chunks(per)) {
        let mut row = 0f64;
        for (&pv, &tv) in pr.iter().zip(tr) {
            let pv = pv.to_f64();
            let tv = tv.to_f64();
            if tv != 0.0 {
                row -= tv * pv.max(LOG_FLOOR).ln();
            }
            if tv != 1.0 {
                row -= (1.0 - tv) * (1.0 - pv).max(LOG_FLOOR).ln();
            }
        }
        total += row;
    }
    let out = Tensor::scalar(T::from_f64(total / b as f64));
    check_finite(&out, "reconstruction_loss")?;
    Ok(out)
}

pub(crate) fn bce_sum_mean_bwd<T: Element>(p: &Tensor<T>, target: &Tensor<T>, dy: T) -> Tensor<T> {
    let b = p.shape()[0] as f64;
    let scale = dy.to_f64() / b;
    let mut dp = Tensor::zeros(p.shape());
    for ((d, &pv), &tv) in dp.data_mut().iter_mut().zip(p.data()).zip(target.data()) {
        let pv = pv.to_f64();
        let tv = tv.to_f64();
        let g = -tv / pv.max(LOG_FLOOR) + (1.0 - tv) / (1.0 - pv).max(LOG_FLOOR);
        *d = T::from_f64(g * scale);
    }
    dp
}

/// KL(q‖N(0,I)) in closed form, mean over the batch:
/// 0.5 · Σ_d (μ² + exp(lv) − lv − 1).
pub(crate) fn kl_mean_fwd<T: Element>(mu: &Tensor<T>, log_var: &Tensor<T>) -> Result<Tensor<T>> {
    let b = mu.shape()[0];
    let mut total = 0f64;
    for (&m, &lv) in mu.data().iter().zip(log_var.data()) {
        let m = m.to_f64();
        let lv = lv.to_f64();
        total += 0.5 * (m * m + lv.exp() - lv - 1.0);
    }
    let out = Tensor::scalar(T::from_f64(total / b as f64));
    check_finite(&out, "kl_divergence")?;
    Ok(out)
}

pub(crate) fn kl_mean_bwd<T: Element>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    dy: T,
) -> (Tensor<T>, Tensor<T>) {
    let scale = dy.to_f64() / mu.shape()[0] as f64;
    let dmu = mu.map(|m| T::from_f64(m.to_f64() * scale));
    let dlv = log_var.map(|lv| T::from_f64(0.5 * (lv.to_f64().exp() - 1.0) * scale));
    (dmu, dlv)
}

/// −mean log p (target_is_one) or −mean log(1−p): the Bernoulli NLL of the
/// discriminator's verdicts against a constant label.
pub(crate) fn bern_nll_mean_fwd<T: Element>(p: &Tensor<T>, target_is_one: bool) -> Result<Tensor<T>> {
    let n = p.numel() as f64;
    let mut total = 0f64;
    for &pv in p.data() {
        let pv = pv.to_f64();
        let arg = if target_is_one { pv } else { 1.0 - pv };
        total -= arg.max(LOG_FLOOR).ln();
    }
    let out = Tensor::scalar(T::from_f64(total / n));
    check_finite(&out, "gan_loss")?;
    Ok(out)
}

pub(crate) fn bern_nll_mean_bwd<T: Element>(p: &Tensor<T>, target_is_one: bool, dy: T) -> Tensor<T> {
    let scale = dy.to_f64() / p.numel() as f64;
    p.map(|pv| {
        let pv = pv.to_f64();
        let g = if target_is_one {
            -1.0 / pv.max(LOG_FLOOR)
        } else {
            1.0 / (1.0 - pv).max(LOG_FLOOR)
        };
        T::from_f64(g * scale)
    })
}

/// Softmax cross-entropy over logits [B,C] against integer labels, mean over
/// the batch. Returns (loss, softmax probabilities) — the probabilities feed
/// the backward pass.
pub(crate) fn cross_entropy_fwd<T: Element>(
    logits: &Tensor<T>,
    labels: &[u8],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let b = logits.shape()[0];
    let c = logits.shape()[1];
    if labels.len() != b {
        return Err(CoreError::Shape {
            op: "cross_entropy",
            detail: format!("{b} rows but {} labels", labels.len()),
        });
    }
    let probs = softmax_fwd(logits)?;
    let mut total = 0f64;
    for (row, &lab) in probs.data().chunks(c).zip(labels) {
        total -= row[lab as usize].to_f64().max(LOG_FLOOR).ln();
    }
    let loss = Tensor::scalar(T::from_f64(total / b as f64));
    check_finite(&loss, "cross_entropy")?;
    Ok((loss, probs))
}

pub(crate) fn cross_entropy_bwd<T: Element>(probs: &Tensor<T>, labels: &[u8], dy: T) -> Tensor<T> {
    let b = probs.shape()[0];
    let c = probs.shape()[1];
    let scale = T::from_f64(dy.to_f64() / b as f64);
    let mut dx = probs.clone();
    for (row, &lab) in dx.data_mut().chunks_mut(c).zip(labels) {
        row[lab as usize] = row[lab as usize] - T::one();
        for v in row.iter_mut() {
            *v = *v * scale;
        }
    }
    dx
}

/// Σ over all elements (test utility op).
pub(crate) fn sum_all_fwd<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let mut total = 0f64;
    for &v in x.data() {
        total += v.to_f64();
    }
    Tensor::scalar(T::from_f64(total))
}

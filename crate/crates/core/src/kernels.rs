//! Numeric kernels shared by the autodiff graph and the gradient checker.
//!
//! Forward kernels are generic over the float type: the graph runs them in
//! `f32`, the finite-difference checker replays them in `f64`. Backward
//! kernels exist only in `f32`.
//!
//! Convolution is cross-correlation with zero padding. The stride-1 path is
//! written as shifted row operations over contiguous slices so the inner
//! loops vectorize; the general-stride path is a plain scalar loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Zero padding that preserves H,W at stride 1. Rejects even kernels.
pub fn same_padding(k: usize) -> Result<usize> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Shape(format!(
            "kernel size {k} has no symmetric same-padding; use an odd kernel or explicit padding"
        )));
    }
    Ok((k - 1) / 2)
}

/// Resolved convolution geometry. All index arithmetic lives here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub groups: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn infer(
        input_shape: &[usize],
        weight_shape: &[usize],
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<ConvDims> {
        let (n, cin, h, w) = match *input_shape {
            [n, cin, h, w] => (n, cin, h, w),
            ref other => {
                return Err(Error::Shape(format!(
                    "conv2d: input must be rank-4 (N,Cin,H,W), got {other:?}"
                )))
            }
        };
        let (cout, wc, kh, kw) = match *weight_shape {
            [cout, wc, kh, kw] => (cout, wc, kh, kw),
            ref other => {
                return Err(Error::Shape(format!(
                    "conv2d: weight must be rank-4 (Cout,Cin/G,kh,kw), got {other:?}"
                )))
            }
        };
        if groups == 0 || stride == 0 {
            return Err(Error::Shape(format!(
                "conv2d: stride ({stride}) and groups ({groups}) must be positive"
            )));
        }
        if cin % groups != 0 {
            return Err(Error::Shape(format!(
                "conv2d: input channel count {cin} not divisible by groups {groups}"
            )));
        }
        if cout % groups != 0 {
            return Err(Error::Shape(format!(
                "conv2d: output channel count {cout} not divisible by groups {groups}"
            )));
        }
        if wc != cin / groups {
            return Err(Error::Shape(format!(
                "conv2d: weight in-channel dim is {wc}, expected Cin/G = {}",
                cin / groups
            )));
        }
        if kh == 0 || kw == 0 {
            return Err(Error::Shape(format!("conv2d: kernel dims ({kh},{kw}) must be positive")));
        }
        if h + 2 * padding < kh {
            return Err(Error::Shape(format!(
                "conv2d: kernel height {kh} exceeds padded input height {}",
                h + 2 * padding
            )));
        }
        if w + 2 * padding < kw {
            return Err(Error::Shape(format!(
                "conv2d: kernel width {kw} exceeds padded input width {}",
                w + 2 * padding
            )));
        }
        Ok(ConvDims {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            groups,
            stride,
            padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.cout, self.oh, self.ow]
    }

    fn cin_per_group(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_per_group(&self) -> usize {
        self.cout / self.groups
    }

    /// Valid output range along one axis for kernel offset `k_i` at stride 1:
    /// output index o is valid iff `o + k_i - padding` lands inside `[0, in)`.
    fn stride1_span(in_len: usize, out_len: usize, k_i: usize, padding: usize) -> Option<(usize, usize)> {
        let lo = padding.saturating_sub(k_i);
        let hi = (in_len + padding).saturating_sub(k_i).min(out_len);
        (lo < hi).then_some((lo, hi))
    }
}

pub fn conv2d_fwd<F: Float>(d: &ConvDims, input: &[F], weight: &[F], bias: &[F], out: &mut [F]) {
    let (cin_g, cout_g) = (d.cin_per_group(), d.cout_per_group());
    let (in_plane, out_plane) = (d.h * d.w, d.oh * d.ow);
    for n_i in 0..d.n {
        for g in 0..d.groups {
            for co_l in 0..cout_g {
                let co = g * cout_g + co_l;
                let o = &mut out[(n_i * d.cout + co) * out_plane..][..out_plane];
                o.fill(bias[co]);
                for ci_l in 0..cin_g {
                    let ci = g * cin_g + ci_l;
                    let x = &input[(n_i * d.cin + ci) * in_plane..][..in_plane];
                    let wk = &weight[(co * cin_g + ci_l) * d.kh * d.kw..][..d.kh * d.kw];
                    if d.stride == 1 {
                        conv_plane_stride1(d, x, wk, o);
                    } else {
                        conv_plane_general(d, x, wk, o);
                    }
                }
            }
        }
    }
}

fn conv_plane_stride1<F: Float>(d: &ConvDims, x: &[F], wk: &[F], out: &mut [F]) {
    for ky in 0..d.kh {
        let Some((oy_lo, oy_hi)) = ConvDims::stride1_span(d.h, d.oh, ky, d.padding) else {
            continue;
        };
        for kx in 0..d.kw {
            let Some((ox_lo, ox_hi)) = ConvDims::stride1_span(d.w, d.ow, kx, d.padding) else {
                continue;
            };
            let wv = wk[ky * d.kw + kx];
            let len = ox_hi - ox_lo;
            for oy in oy_lo..oy_hi {
                let iy = oy + ky - d.padding;
                let ix0 = ox_lo + kx - d.padding;
                let orow = &mut out[oy * d.ow + ox_lo..][..len];
                let irow = &x[iy * d.w + ix0..][..len];
                for (o, i) in orow.iter_mut().zip(irow.iter()) {
                    *o = *o + wv * *i;
                }
            }
        }
    }
}

fn conv_plane_general<F: Float>(d: &ConvDims, x: &[F], wk: &[F], out: &mut [F]) {
    for oy in 0..d.oh {
        for ox in 0..d.ow {
            let mut acc = F::zero();
            for ky in 0..d.kh {
                let iy = (oy * d.stride + ky) as isize - d.padding as isize;
                if iy < 0 || iy >= d.h as isize {
                    continue;
                }
                for kx in 0..d.kw {
                    let ix = (ox * d.stride + kx) as isize - d.padding as isize;
                    if ix < 0 || ix >= d.w as isize {
                        continue;
                    }
                    acc = acc + wk[ky * d.kw + kx] * x[iy as usize * d.w + ix as usize];
                }
            }
            out[oy * d.ow + ox] = out[oy * d.ow + ox] + acc;
        }
    }
}

pub fn conv2d_bwd_bias<F: Float>(d: &ConvDims, d_out: &[F], d_bias: &mut [F]) {
    let out_plane = d.oh * d.ow;
    for n_i in 0..d.n {
        for co in 0..d.cout {
            let go = &d_out[(n_i * d.cout + co) * out_plane..][..out_plane];
            let mut acc = F::zero();
            for v in go {
                acc = acc + *v;
            }
            d_bias[co] = d_bias[co] + acc;
        }
    }
}

pub fn conv2d_bwd_input<F: Float>(d: &ConvDims, weight: &[F], d_out: &[F], d_input: &mut [F]) {
    let (cin_g, cout_g) = (d.cin_per_group(), d.cout_per_group());
    let (in_plane, out_plane) = (d.h * d.w, d.oh * d.ow);
    for n_i in 0..d.n {
        for g in 0..d.groups {
            for co_l in 0..cout_g {
                let co = g * cout_g + co_l;
                let go = &d_out[(n_i * d.cout + co) * out_plane..][..out_plane];
                for ci_l in 0..cin_g {
                    let ci = g * cin_g + ci_l;
                    let gx = &mut d_input[(n_i * d.cin + ci) * in_plane..][..in_plane];
                    let wk = &weight[(co * cin_g + ci_l) * d.kh * d.kw..][..d.kh * d.kw];
                    if d.stride == 1 {
                        for ky in 0..d.kh {
                            let Some((oy_lo, oy_hi)) = ConvDims::stride1_span(d.h, d.oh, ky, d.padding)
                            else {
                                continue;
                            };
                            for kx in 0..d.kw {
                                let Some((ox_lo, ox_hi)) =
                                    ConvDims::stride1_span(d.w, d.ow, kx, d.padding)
                                else {
                                    continue;
                                };
                                let wv = wk[ky * d.kw + kx];
                                let len = ox_hi - ox_lo;
                                for oy in oy_lo..oy_hi {
                                    let iy = oy + ky - d.padding;
                                    let ix0 = ox_lo + kx - d.padding;
                                    let gxrow = &mut gx[iy * d.w + ix0..][..len];
                                    let gorow = &go[oy * d.ow + ox_lo..][..len];
                                    for (gi, g_o) in gxrow.iter_mut().zip(gorow.iter()) {
                                        *gi = *gi + wv * *g_o;
                                    }
                                }
                            }
                        }
                    } else {
                        for oy in 0..d.oh {
                            for ox in 0..d.ow {
                                let g_o = go[oy * d.ow + ox];
                                for ky in 0..d.kh {
                                    let iy = (oy * d.stride + ky) as isize - d.padding as isize;
                                    if iy < 0 || iy >= d.h as isize {
                                        continue;
                                    }
                                    for kx in 0..d.kw {
                                        let ix = (ox * d.stride + kx) as isize - d.padding as isize;
                                        if ix < 0 || ix >= d.w as isize {
                                            continue;
                                        }
                                        gx[iy as usize * d.w + ix as usize] =
                                            gx[iy as usize * d.w + ix as usize]
                                                + wk[ky * d.kw + kx] * g_o;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_bwd_weight<F: Float>(d: &ConvDims, input: &[F], d_out: &[F], d_weight: &mut [F]) {
    let (cin_g, cout_g) = (d.cin_per_group(), d.cout_per_group());
    let (in_plane, out_plane) = (d.h * d.w, d.oh * d.ow);
    for n_i in 0..d.n {
        for g in 0..d.groups {
            for co_l in 0..cout_g {
                let co = g * cout_g + co_l;
                let go = &d_out[(n_i * d.cout + co) * out_plane..][..out_plane];
                for ci_l in 0..cin_g {
                    let ci = g * cin_g + ci_l;
                    let x = &input[(n_i * d.cin + ci) * in_plane..][..in_plane];
                    let gw = &mut d_weight[(co * cin_g + ci_l) * d.kh * d.kw..][..d.kh * d.kw];
                    if d.stride == 1 {
                        for ky in 0..d.kh {
                            let Some((oy_lo, oy_hi)) = ConvDims::stride1_span(d.h, d.oh, ky, d.padding)
                            else {
                                continue;
                            };
                            for kx in 0..d.kw {
                                let Some((ox_lo, ox_hi)) =
                                    ConvDims::stride1_span(d.w, d.ow, kx, d.padding)
                                else {
                                    continue;
                                };
                                let len = ox_hi - ox_lo;
                                let mut acc = F::zero();
                                for oy in oy_lo..oy_hi {
                                    let iy = oy + ky - d.padding;
                                    let ix0 = ox_lo + kx - d.padding;
                                    let xrow = &x[iy * d.w + ix0..][..len];
                                    let gorow = &go[oy * d.ow + ox_lo..][..len];
                                    for (xi, g_o) in xrow.iter().zip(gorow.iter()) {
                                        acc = acc + *xi * *g_o;
                                    }
                                }
                                gw[ky * d.kw + kx] = gw[ky * d.kw + kx] + acc;
                            }
                        }
                    } else {
                        for oy in 0..d.oh {
                            for ox in 0..d.ow {
                                let g_o = go[oy * d.ow + ox];
                                for ky in 0..d.kh {
                                    let iy = (oy * d.stride + ky) as isize - d.padding as isize;
                                    if iy < 0 || iy >= d.h as isize {
                                        continue;
                                    }
                                    for kx in 0..d.kw {
                                        let ix = (ox * d.stride + kx) as isize - d.padding as isize;
                                        if ix < 0 || ix >= d.w as isize {
                                            continue;
                                        }
                                        gw[ky * d.kw + kx] = gw[ky * d.kw + kx]
                                            + x[iy as usize * d.w + ix as usize] * g_o;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn relu_fwd<F: Float>(x: &[F], out: &mut [F]) {
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o = if *v > F::zero() { *v } else { F::zero() };
    }
}

pub fn relu_bwd<F: Float>(x: &[F], d_out: &[F], d_in: &mut [F]) {
    for ((gi, v), g_o) in d_in.iter_mut().zip(x.iter()).zip(d_out.iter()) {
        if *v > F::zero() {
            *gi = *gi + *g_o;
        }
    }
}

pub fn add_fwd<F: Float>(a: &[F], b: &[F], out: &mut [F]) {
    for ((o, x), y) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
        *o = *x + *y;
    }
}

/// 2x2 max pooling with stride 2. `argmax` records, per output element, the
/// linear index of the winning input element (first in scan order on ties).
pub fn max_pool2x2_fwd<F: Float>(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    x: &[F],
    out: &mut [F],
    argmax: &mut [u32],
) {
    let (oh, ow) = (h / 2, w / 2);
    for plane in 0..n * c {
        let base = plane * h * w;
        let obase = plane * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let i00 = base + (2 * oy) * w + 2 * ox;
                let cands = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = cands[0];
                let mut best_v = x[cands[0]];
                for &i in &cands[1..] {
                    if x[i] > best_v {
                        best_v = x[i];
                        best = i;
                    }
                }
                out[obase + oy * ow + ox] = best_v;
                argmax[obase + oy * ow + ox] = best as u32;
            }
        }
    }
}

pub fn max_pool2x2_bwd<F: Float>(argmax: &[u32], d_out: &[F], d_in: &mut [F]) {
    for (&src, g_o) in argmax.iter().zip(d_out.iter()) {
        d_in[src as usize] = d_in[src as usize] + *g_o;
    }
}

/// Concatenate per-image channel blocks. `parts` holds (data, channels) per
/// input; every input shares (n, h, w).
pub fn concat_channels_fwd<F: Float>(parts: &[(&[F], usize)], n: usize, h: usize, w: usize, out: &mut [F]) {
    let plane = h * w;
    let c_total: usize = parts.iter().map(|(_, c)| c).sum();
    for n_i in 0..n {
        let mut c_off = 0;
        for (data, c) in parts {
            let src = &data[n_i * c * plane..][..c * plane];
            out[(n_i * c_total + c_off) * plane..][..c * plane].copy_from_slice(src);
            c_off += c;
        }
    }
}

pub fn sse_fwd<F: Float>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc
}

/// d/dpred of g * sum((pred-target)^2) is 2 g (pred-target); d/dtarget is its negation.
pub fn sse_bwd<F: Float>(
    pred: &[F],
    target: &[F],
    g_out: F,
    mut d_pred: Option<&mut [F]>,
    mut d_target: Option<&mut [F]>,
) {
    let two = F::one() + F::one();
    for i in 0..pred.len() {
        let v = two * g_out * (pred[i] - target[i]);
        if let Some(gp) = d_pred.as_deref_mut() {
            gp[i] = gp[i] + v;
        }
        if let Some(gt) = d_target.as_deref_mut() {
            gt[i] = gt[i] - v;
        }
    }
}

pub fn sum_fwd<F: Float>(x: &[F]) -> F {
    let mut acc = F::zero();
    for v in x {
        acc = acc + *v;
    }
    acc
}

/// Bilinear resize of a rank-3 (C,H,W) or rank-4 (N,C,H,W) tensor to a new
/// spatial size. Decode-time utility, not differentiable.
///
/// Sample coordinates use `src = (dst + 0.5) * (in/out) - 0.5` clamped to the
/// source extent, with lerp blending, so resizing to the same size is the
/// identity and constant maps stay constant exactly.
pub fn bilinear_resize(t: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    if oh == 0 || ow == 0 {
        return Err(Error::Shape(format!(
            "bilinear_resize: target dims ({oh},{ow}) must be positive"
        )));
    }
    let (planes, h, w, mut shape) = match *t.shape() {
        [c, h, w] => (c, h, w, vec![c, 0, 0]),
        [n, c, h, w] => (n * c, h, w, vec![n, c, 0, 0]),
        ref other => {
            return Err(Error::Shape(format!(
                "bilinear_resize: expected rank-3 or rank-4 tensor, got {other:?}"
            )))
        }
    };
    let rank = shape.len();
    shape[rank - 2] = oh;
    shape[rank - 1] = ow;

    let sy = h as f32 / oh as f32;
    let sx = w as f32 / ow as f32;
    let mut out = vec![0.0f32; planes * oh * ow];
    // Precompute per-axis source indices and fractions.
    let mut ys = Vec::with_capacity(oh);
    for oy in 0..oh {
        ys.push(source_coord(oy, sy, h));
    }
    let mut xs = Vec::with_capacity(ow);
    for ox in 0..ow {
        xs.push(source_coord(ox, sx, w));
    }
    for p in 0..planes {
        let src = &t.data()[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v00 = src[y0 * w + x0];
                let v01 = src[y0 * w + x1];
                let v10 = src[y1 * w + x0];
                let v11 = src[y1 * w + x1];
                let top = v00 + fx * (v01 - v00);
                let bot = v10 + fx * (v11 - v10);
                dst[oy * ow + ox] = top + fy * (bot - top);
            }
        }
    }
    Tensor::from_vec(&shape, out)
}

fn source_coord(dst: usize, scale: f32, in_len: usize) -> (usize, usize, f32) {
    let src = ((dst as f32 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Independent quadruple-loop sliding-window reference for grouped conv.
    pub(crate) fn naive_conv(
        d: &ConvDims,
        input: &[f32],
        weight: &[f32],
        bias: &[f32],
    ) -> Vec<f32> {
        let mut out = vec![0.0; d.n * d.cout * d.oh * d.ow];
        let (cin_g, cout_g) = (d.cin / d.groups, d.cout / d.groups);
        for n_i in 0..d.n {
            for co in 0..d.cout {
                let g = co / cout_g;
                for oy in 0..d.oh {
                    for ox in 0..d.ow {
                        let mut acc = bias[co] as f64;
                        for ci_l in 0..cin_g {
                            let ci = g * cin_g + ci_l;
                            for ky in 0..d.kh {
                                for kx in 0..d.kw {
                                    let iy = (oy * d.stride + ky) as isize - d.padding as isize;
                                    let ix = (ox * d.stride + kx) as isize - d.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= d.h as isize || ix >= d.w as isize
                                    {
                                        continue;
                                    }
                                    let xv = input
                                        [((n_i * d.cin + ci) * d.h + iy as usize) * d.w + ix as usize];
                                    let wv = weight
                                        [((co * cin_g + ci_l) * d.kh + ky) * d.kw + kx];
                                    acc += (xv * wv) as f64;
                                }
                            }
                        }
                        out[((n_i * d.cout + co) * d.oh + oy) * d.ow + ox] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn rand_vec(rng: &mut SplitMix64, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.range_f32(-1.0, 1.0)).collect()
    }

    #[test]
    fn same_padding_rejects_even_kernels() {
        assert_eq!(same_padding(3).unwrap(), 1);
        assert_eq!(same_padding(7).unwrap(), 3);
        assert!(same_padding(4).is_err());
        assert!(same_padding(0).is_err());
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = SplitMix64::new(11);
        let d = ConvDims::infer(&[1, 4, 5, 5], &[3, 4, 3, 3], 1, 1, 1).unwrap();
        let x = rand_vec(&mut rng, 1 * 4 * 5 * 5);
        let w = rand_vec(&mut rng, 3 * 4 * 3 * 3);
        let b = rand_vec(&mut rng, 3);
        let mut out = vec![0.0; 1 * 3 * 5 * 5];
        conv2d_fwd(&d, &x, &w, &b, &mut out);
        let want = naive_conv(&d, &x, &w, &b);
        for (a, e) in out.iter().zip(want.iter()) {
            let rel = (a - e).abs() / e.abs().max(1e-3);
            assert!(rel < 1e-5, "got {a}, want {e}");
        }
    }

    #[test]
    fn strided_grouped_conv_matches_naive_oracle() {
        let mut rng = SplitMix64::new(17);
        for (stride, pad, groups) in [(2, 1, 2), (1, 0, 2), (2, 2, 1), (3, 1, 4)] {
            let d = ConvDims::infer(&[2, 4, 7, 6], &[8, 4 / groups, 3, 3], stride, pad, groups)
                .unwrap();
            let x = rand_vec(&mut rng, 2 * 4 * 7 * 6);
            let w = rand_vec(&mut rng, 8 * (4 / groups) * 9);
            let b = rand_vec(&mut rng, 8);
            let mut out = vec![0.0; d.n * d.cout * d.oh * d.ow];
            conv2d_fwd(&d, &x, &w, &b, &mut out);
            let want = naive_conv(&d, &x, &w, &b);
            for (a, e) in out.iter().zip(want.iter()) {
                assert!((a - e).abs() < 1e-4, "stride={stride} pad={pad} groups={groups}");
            }
        }
    }

    #[test]
    fn conv_dims_validation_names_offending_dimension() {
        let err = ConvDims::infer(&[1, 5, 4, 4], &[4, 2, 3, 3], 1, 1, 2).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("input channel count 5"), "{msg}");

        let err = ConvDims::infer(&[1, 4, 4, 4], &[3, 2, 3, 3], 1, 1, 2).unwrap_err();
        assert!(alloc::format!("{err}").contains("output channel count 3"));

        let err = ConvDims::infer(&[1, 4, 4, 4], &[4, 4, 3, 3], 1, 1, 2).unwrap_err();
        assert!(alloc::format!("{err}").contains("weight in-channel dim"));

        let err = ConvDims::infer(&[1, 4, 2, 4], &[4, 4, 5, 5], 1, 1, 1).unwrap_err();
        assert!(alloc::format!("{err}").contains("kernel height 5"));
    }

    #[test]
    fn pool_records_first_max_on_ties() {
        let x = vec![1.0, 1.0, 1.0, 1.0];
        let mut out = vec![0.0; 1];
        let mut argmax = vec![0u32; 1];
        max_pool2x2_fwd(1, 1, 2, 2, &x, &mut out, &mut argmax);
        assert_eq!(out[0], 1.0);
        assert_eq!(argmax[0], 0);
    }

    #[test]
    fn resize_identity_and_constant() {
        let t = Tensor::from_vec(&[1, 3, 3], (0..9).map(|i| i as f32).collect()).unwrap();
        let same = bilinear_resize(&t, 3, 3).unwrap();
        assert_eq!(same, t);

        let c = Tensor::full(&[2, 4, 4], 0.73);
        for (oh, ow) in [(2, 2), (7, 5), (9, 9), (1, 1)] {
            let r = bilinear_resize(&c, oh, ow).unwrap();
            assert!(r.data().iter().all(|&v| v == 0.73));
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let t = Tensor::zeros(&[1, 2, 2]);
        assert!(bilinear_resize(&t, 0, 2).is_err());
    }
}

//! Cylinder-style convolution and its companions.
//!
//! Padding is materialised explicitly and the convolution runs as im2col +
//! GEMM. Under [`PadMode::CircularAzimuth`] the azimuthal index is taken
//! modulo the width, so the feature map behaves as a cylinder and the left
//! and right image borders are ordinary neighbours.

mod gated;
mod norm;

pub use gated::{elu, elu_grad, sigmoid, GatedCache, GatedConvLayer, GatedGrads};
pub use norm::{InstanceNormCache, InstanceNormGrads, InstanceNormLayer};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, MatRef, Scalar, Tensor};

/// Border handling for the two spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PadMode {
    /// Zero padding on both axes (vanilla convolution).
    ZeroBoth,
    /// Circular on the azimuth (width), zero on the polar axis (height).
    CircularAzimuth,
    /// Circular on the azimuth, reflection on the polar axis.
    CircularAzimuthMirrorPolar,
}

impl PadMode {
    pub const ALL: [PadMode; 3] =
        [PadMode::ZeroBoth, PadMode::CircularAzimuth, PadMode::CircularAzimuthMirrorPolar];

    pub fn is_circular(self) -> bool {
        !matches!(self, PadMode::ZeroBoth)
    }

    pub fn name(self) -> &'static str {
        match self {
            PadMode::ZeroBoth => "zero",
            PadMode::CircularAzimuth => "circular",
            PadMode::CircularAzimuthMirrorPolar => "circular_mirror",
        }
    }
}

impl fmt::Display for PadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "zeroboth" | "zero_both" => Ok(PadMode::ZeroBoth),
            "circular" | "circularazimuth" | "circular_azimuth" => Ok(PadMode::CircularAzimuth),
            "circular_mirror" | "c+m" | "circularazimuthmirrorpolar" => Ok(PadMode::CircularAzimuthMirrorPolar),
            other => Err(Error::Config(format!("unknown pad mode {other:?}"))),
        }
    }
}

/// Source row of padded row `i`, or `None` when it is zero fill.
#[inline]
fn source_row(mode: PadMode, i: usize, m: usize, h: usize) -> Option<usize> {
    let r = i as isize - m as isize;
    let h = h as isize;
    match mode {
        PadMode::ZeroBoth | PadMode::CircularAzimuth => (0..h).contains(&r).then_some(r as usize),
        PadMode::CircularAzimuthMirrorPolar => {
            let r = if r < 0 { -r } else if r >= h { 2 * (h - 1) - r } else { r };
            Some(r as usize)
        }
    }
}

/// Source column of padded column `j`, or `None` when it is zero fill.
#[inline]
fn source_col(mode: PadMode, j: usize, n: usize, w: usize) -> Option<usize> {
    let c = j as isize - n as isize;
    match mode {
        PadMode::ZeroBoth => (0..w as isize).contains(&c).then_some(c as usize),
        _ => Some(c.rem_euclid(w as isize) as usize),
    }
}

fn check_pad(mode: PadMode, m: usize, n: usize, h: usize, w: usize) -> Result<()> {
    if mode.is_circular() && (w == 0 || n > w) {
        return Err(Error::Param(format!("circular pad {n} exceeds width {w}")));
    }
    if mode == PadMode::CircularAzimuthMirrorPolar && m > 0 && m >= h {
        return Err(Error::Param(format!("mirror pad {m} needs height > {m}, got {h}")));
    }
    Ok(())
}

/// Pads `m` rows above/below and `n` columns left/right.
pub fn pad<T: Scalar>(x: &Tensor<T>, mode: PadMode, m: usize, n: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.shape();
    check_pad(mode, m, n, h, w)?;
    let (hp, wp) = (h + 2 * m, w + 2 * n);
    let cols: Vec<Option<usize>> = (0..wp).map(|j| source_col(mode, j, n, w)).collect();
    let mut out = vec![T::zero(); b * c * hp * wp];
    for (plane_out, plane_in) in out.chunks_exact_mut(hp * wp).zip(x.data().chunks_exact(h * w)) {
        for i in 0..hp {
            let Some(r) = source_row(mode, i, m, h) else { continue };
            let src = &plane_in[r * w..(r + 1) * w];
            let dst = &mut plane_out[i * wp..(i + 1) * wp];
            for (d, col) in dst.iter_mut().zip(&cols) {
                if let Some(cidx) = col {
                    *d = src[*cidx];
                }
            }
        }
    }
    Ok(Tensor::from_raw([b, c, hp, wp], out))
}

/// Adjoint of [`pad`]: folds a gradient on the padded tensor back onto the
/// `h x w` source, accumulating every wrapped or reflected copy.
pub fn pad_adjoint<T: Scalar>(g: &Tensor<T>, mode: PadMode, m: usize, n: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let [b, c, hp, wp] = g.shape();
    if hp != h + 2 * m || wp != w + 2 * n {
        return Err(Error::Shape(format!("pad_adjoint: {:?} is not {h}x{w} padded by ({m}, {n})", g.shape())));
    }
    check_pad(mode, m, n, h, w)?;
    let cols: Vec<Option<usize>> = (0..wp).map(|j| source_col(mode, j, n, w)).collect();
    let mut out = vec![T::zero(); b * c * h * w];
    for (plane_out, plane_in) in out.chunks_exact_mut(h * w).zip(g.data().chunks_exact(hp * wp)) {
        for i in 0..hp {
            let Some(r) = source_row(mode, i, m, h) else { continue };
            let src = &plane_in[i * wp..(i + 1) * wp];
            let dst = &mut plane_out[r * w..(r + 1) * w];
            for (s, col) in src.iter().zip(&cols) {
                if let Some(cidx) = col {
                    dst[*cidx] += *s;
                }
            }
        }
    }
    Ok(Tensor::from_raw([b, c, h, w], out))
}

/// Kernel geometry shared by every conv that reads the same input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    c_in: usize,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    dilation: (usize, usize),
    pad_mode: PadMode,
}

impl Geometry {
    fn pads(&self) -> (usize, usize) {
        ((self.kh - 1) / 2 * self.dilation.0, (self.kw - 1) / 2 * self.dilation.1)
    }

    fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride.0), w.div_ceil(self.stride.1))
    }

    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Writes the `[C*KH*KW, Ho*Wo]` patch matrix of one padded batch item into
/// `cols`, whose rows are `ld` apart.
///
/// Output position `(oh, ow)` with kernel tap `(kh, kw)` reads padded input at
/// `(s_h*oh + (KH-1-kh)*d_h, s_w*ow + (KW-1-kw)*d_w)`: the input index
/// decreases as the kernel index increases, i.e. a true convolution with the
/// stride applied before the kernel offset.
fn im2col<T: Scalar>(padded: &[T], hp: usize, wp: usize, g: &Geometry, ho: usize, wo: usize, cols: &mut [T], ld: usize) {
    let p = ho * wo;
    let (sh, sw) = g.stride;
    let (dh, dw) = g.dilation;
    for c in 0..g.c_in {
        let plane = &padded[c * hp * wp..(c + 1) * hp * wp];
        for kh in 0..g.kh {
            let row_off = (g.kh - 1 - kh) * dh;
            for kw in 0..g.kw {
                let col_off = (g.kw - 1 - kw) * dw;
                let r = (c * g.kh + kh) * g.kw + kw;
                let dst = &mut cols[r * ld..r * ld + p];
                for oh in 0..ho {
                    let src_row = &plane[(sh * oh + row_off) * wp..];
                    let drow = &mut dst[oh * wo..(oh + 1) * wo];
                    if sw == 1 {
                        drow.copy_from_slice(&src_row[col_off..col_off + wo]);
                    } else {
                        for (ow, d) in drow.iter_mut().enumerate() {
                            *d = src_row[sw * ow + col_off];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients onto the padded item.
fn col2im<T: Scalar>(cols: &[T], hp: usize, wp: usize, g: &Geometry, ho: usize, wo: usize, padded: &mut [T], ld: usize) {
    let p = ho * wo;
    let (sh, sw) = g.stride;
    let (dh, dw) = g.dilation;
    for c in 0..g.c_in {
        let plane = &mut padded[c * hp * wp..(c + 1) * hp * wp];
        for kh in 0..g.kh {
            let row_off = (g.kh - 1 - kh) * dh;
            for kw in 0..g.kw {
                let col_off = (g.kw - 1 - kw) * dw;
                let r = (c * g.kh + kh) * g.kw + kw;
                let src = &cols[r * ld..r * ld + p];
                for oh in 0..ho {
                    let dst_row = &mut plane[(sh * oh + row_off) * wp..];
                    let srow = &src[oh * wo..(oh + 1) * wo];
                    for (ow, &v) in srow.iter().enumerate() {
                        dst_row[sw * ow + col_off] += v;
                    }
                }
            }
        }
    }
}

/// 2D convolution with "same" padding and a selectable border topology.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f32> {
    /// `[C_out, C_in, KH, KW]`, both extents odd.
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    /// `(polar, azimuthal)`.
    pub stride: (usize, usize),
    /// `(polar, azimuthal)`.
    pub dilation: (usize, usize),
    pub pad_mode: PadMode,
}

/// Gradients of a [`ConvLayer`] for one backward pass.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Vec<T>,
        stride: (usize, usize),
        dilation: (usize, usize),
        pad_mode: PadMode,
    ) -> Result<Self> {
        let [co, _, kh, kw] = weight.shape();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Param(format!("kernel extents must be odd, got {kh}x{kw}")));
        }
        if bias.len() != co {
            return Err(Error::Size(format!("bias has {} entries for {co} output channels", bias.len())));
        }
        if stride.0 == 0 || stride.1 == 0 || dilation.0 == 0 || dilation.1 == 0 {
            return Err(Error::Param("stride and dilation must be positive".into()));
        }
        weight.ensure_finite("conv weight")?;
        Ok(ConvLayer { weight, bias, stride, dilation, pad_mode })
    }

    /// He-normal weights, zero bias.
    pub fn random(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad_mode: PadMode,
    ) -> Result<Self> {
        let fan_in = (c_in * kernel.0 * kernel.1).max(1) as f64;
        let weight = rng.normal([c_out, c_in, kernel.0, kernel.1], 0.0, (2.0 / fan_in).sqrt())?;
        Self::new(weight, vec![T::zero(); c_out], stride, (1, 1), pad_mode)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2], s[3])
    }

    /// "Same" padding `(rows, cols)`.
    pub fn pads(&self) -> (usize, usize) {
        self.geometry().pads()
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        self.geometry().out_size(h, w)
    }

    fn geometry(&self) -> Geometry {
        let [_, c_in, kh, kw] = self.weight.shape();
        Geometry { c_in, kh, kw, stride: self.stride, dilation: self.dilation, pad_mode: self.pad_mode }
    }

    pub(crate) fn same_geometry(&self, other: &Self) -> bool {
        self.geometry() == other.geometry() && self.out_channels() == other.out_channels()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut outs = conv_forward_shared(x, &[self])?;
        Ok(outs.pop().unwrap())
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let (input, mut params) = conv_backward_shared(x, &[self], &[grad_out])?;
        let (weight, bias) = params.pop().unwrap();
        Ok(ConvGrads { input, weight, bias })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

fn check_input<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<()> {
    if x.channels() != layer.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels(),
            x.channels()
        )));
    }
    if x.height() == 0 || x.width() == 0 {
        return Err(Error::Shape(format!("conv input has empty spatial extent {:?}", x.shape())));
    }
    Ok(())
}

/// Patch matrix of the whole batch: `[C*KH*KW, N*Ho*Wo]`, item `i` in
/// columns `i*P..(i+1)*P`.
fn batch_cols<T: Scalar>(x: &Tensor<T>, g: &Geometry) -> Result<Vec<T>> {
    let (m, n) = g.pads();
    let [b, _, h, w] = x.shape();
    let (ho, wo) = g.out_size(h, w);
    let padded = pad(x, g.pad_mode, m, n)?;
    let (hp, wp) = (padded.height(), padded.width());
    let p = ho * wo;
    let mut cols = vec![T::zero(); g.k() * b * p];
    for i in 0..b {
        im2col(padded.item(i), hp, wp, g, ho, wo, &mut cols[i * p..], b * p);
    }
    Ok(cols)
}

/// Weights of all layers stacked row-wise into one `[sum C_out, K]` matrix.
fn stacked_weights<T: Scalar>(layers: &[&ConvLayer<T>]) -> Vec<T> {
    layers.iter().flat_map(|l| l.weight.data().iter().copied()).collect()
}

/// Runs several convolutions of identical geometry over one input as a
/// single GEMM over stacked weights and batch-joined patches.
pub(crate) fn conv_forward_shared<T: Scalar>(x: &Tensor<T>, layers: &[&ConvLayer<T>]) -> Result<Vec<Tensor<T>>> {
    let first = layers[0];
    check_input(x, first)?;
    let g = first.geometry();
    let [b, _, h, w] = x.shape();
    let (ho, wo) = g.out_size(h, w);
    let p = ho * wo;
    let bp = b * p;
    let cols = batch_cols(x, &g)?;
    let co_total: usize = layers.iter().map(|l| l.out_channels()).sum();
    let mut all = vec![T::zero(); co_total * bp];
    matmul(
        MatRef::row_major(&stacked_weights(layers), co_total, g.k()),
        MatRef::row_major(&cols, g.k(), bp),
        &mut all,
        false,
    );
    let mut row0 = 0;
    layers
        .iter()
        .map(|l| {
            let co = l.out_channels();
            let mut data = vec![T::zero(); b * co * p];
            for i in 0..b {
                for (c, &bv) in l.bias.iter().enumerate() {
                    let src = &all[(row0 + c) * bp + i * p..(row0 + c) * bp + (i + 1) * p];
                    let dst = &mut data[(i * co + c) * p..(i * co + c + 1) * p];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v + bv;
                    }
                }
            }
            row0 += co;
            let t = Tensor::from_raw([b, co, ho, wo], data);
            t.ensure_finite("conv2d_forward")?;
            Ok(t)
        })
        .collect()
}

/// Backward pass of [`conv_forward_shared`]: one input gradient summed over
/// all layers, plus `(weight, bias)` gradients per layer.
#[allow(clippy::type_complexity)]
pub(crate) fn conv_backward_shared<T: Scalar>(
    x: &Tensor<T>,
    layers: &[&ConvLayer<T>],
    grads_out: &[&Tensor<T>],
) -> Result<(Tensor<T>, Vec<(Tensor<T>, Vec<T>)>)> {
    let first = layers[0];
    check_input(x, first)?;
    let g = first.geometry();
    let (m, n) = g.pads();
    let [b, c, h, w] = x.shape();
    let (ho, wo) = g.out_size(h, w);
    for (l, go) in layers.iter().zip(grads_out) {
        let want = [b, l.out_channels(), ho, wo];
        if go.shape() != want {
            return Err(Error::Shape(format!("conv grad_out is {:?}, expected {:?}", go.shape(), want)));
        }
    }
    let p = ho * wo;
    let bp = b * p;
    let k = g.k();
    let cols = batch_cols(x, &g)?;
    let co_total: usize = layers.iter().map(|l| l.out_channels()).sum();

    // dY stacked as [sum C_out, N*P], matching the forward layout
    let mut dy = vec![T::zero(); co_total * bp];
    let mut biases = Vec::with_capacity(layers.len());
    let mut row0 = 0;
    for (l, go) in layers.iter().zip(grads_out) {
        let co = l.out_channels();
        let mut gb = vec![T::zero(); co];
        for i in 0..b {
            for (ch, gbv) in gb.iter_mut().enumerate() {
                let src = &go.item(i)[ch * p..(ch + 1) * p];
                dy[(row0 + ch) * bp + i * p..(row0 + ch) * bp + (i + 1) * p].copy_from_slice(src);
                *gbv += src.iter().copied().sum::<T>();
            }
        }
        biases.push(gb);
        row0 += co;
    }

    // dW = dY @ cols^T
    let mut gw = vec![T::zero(); co_total * k];
    matmul(MatRef::row_major(&dy, co_total, bp), MatRef::row_major(&cols, k, bp).t(), &mut gw, false);
    drop(cols);
    // dcols = W^T @ dY
    let mut gcols = vec![T::zero(); k * bp];
    matmul(
        MatRef::row_major(&stacked_weights(layers), co_total, k).t(),
        MatRef::row_major(&dy, co_total, bp),
        &mut gcols,
        false,
    );
    let (hp, wp) = (h + 2 * m, w + 2 * n);
    let chw = c * hp * wp;
    let mut gpadded = vec![T::zero(); b * chw];
    for i in 0..b {
        col2im(&gcols[i * p..], hp, wp, &g, ho, wo, &mut gpadded[i * chw..(i + 1) * chw], bp);
    }
    let gpadded = Tensor::from_raw([b, c, hp, wp], gpadded);
    let gx = pad_adjoint(&gpadded, g.pad_mode, m, n, h, w)?;
    gx.ensure_finite("conv2d_backward")?;
    let mut row0 = 0;
    let params = layers
        .iter()
        .zip(biases)
        .map(|(l, gb)| {
            let len = l.weight.len();
            let wgrad = gw[row0 * k..row0 * k + len].to_vec();
            row0 += l.out_channels();
            (Tensor::from_raw(l.weight.shape(), wgrad), gb)
        })
        .collect();
    Ok((gx, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    fn ones_1x3(mode: PadMode) -> ConvLayer<f64> {
        ConvLayer::new(Tensor::full([1, 1, 1, 3], 1.0), vec![0.0], (1, 1), (1, 1), mode).unwrap()
    }

    /// Direct evaluation of the cylinder convolution sum with explicit
    /// modular / zero / reflected indexing, kept separate from im2col.
    fn brute_conv(x: &Tensor<f64>, l: &ConvLayer<f64>) -> Tensor<f64> {
        let [b, c, h, w] = x.shape();
        let [co, _, kh, kw] = l.weight.shape();
        let (mh, mw) = ((kh - 1) / 2, (kw - 1) / 2);
        let (ho, wo) = (h.div_ceil(l.stride.0), w.div_ceil(l.stride.1));
        Tensor::from_fn([b, co, ho, wo], |n, t, oh, ow| {
            let mut acc = l.bias[t];
            for ci in 0..c {
                for a in -(mh as isize)..=mh as isize {
                    for e in -(mw as isize)..=mw as isize {
                        let k = l.weight.at(t, ci, (a + mh as isize) as usize, (e + mw as isize) as usize);
                        let r = (l.stride.0 * oh) as isize - a * l.dilation.0 as isize;
                        let s = (l.stride.1 * ow) as isize - e * l.dilation.1 as isize;
                        let s = match l.pad_mode {
                            PadMode::ZeroBoth if s < 0 || s >= w as isize => continue,
                            PadMode::ZeroBoth => s,
                            _ => s.rem_euclid(w as isize),
                        };
                        let r = match l.pad_mode {
                            PadMode::CircularAzimuthMirrorPolar => {
                                if r < 0 {
                                    -r
                                } else if r >= h as isize {
                                    2 * (h as isize - 1) - r
                                } else {
                                    r
                                }
                            }
                            _ if r < 0 || r >= h as isize => continue,
                            _ => r,
                        };
                        acc += k * x.at(n, ci, r as usize, s as usize);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn pad_examples() {
        let r = row(&[1.0, 2.0, 3.0]);
        assert_eq!(pad(&r, PadMode::CircularAzimuth, 0, 1).unwrap().data(), &[3.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(pad(&r, PadMode::ZeroBoth, 0, 1).unwrap().data(), &[0.0, 1.0, 2.0, 3.0, 0.0]);
        let col = Tensor::from_vec([1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let p = pad(&col, PadMode::CircularAzimuthMirrorPolar, 1, 0).unwrap();
        assert_eq!(p.data(), &[2.0, 1.0, 2.0, 3.0, 2.0]);
        let p = pad(&col, PadMode::CircularAzimuth, 1, 0).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn oversized_pads_rejected() {
        let r = row(&[1.0, 2.0, 3.0]);
        assert!(matches!(pad(&r, PadMode::CircularAzimuth, 0, 4), Err(Error::Param(_))));
        assert!(matches!(pad(&r, PadMode::CircularAzimuthMirrorPolar, 1, 1), Err(Error::Param(_))));
        assert!(pad(&r, PadMode::ZeroBoth, 5, 7).is_ok());
    }

    #[test]
    fn pad_adjoint_is_transpose() {
        // <pad(x), y> == <x, pad_adjoint(y)>
        let mut rng = Rng::new(11);
        for mode in PadMode::ALL {
            let x: Tensor<f64> = rng.normal([2, 2, 4, 5], 0.0, 1.0).unwrap();
            let y: Tensor<f64> = rng.normal([2, 2, 8, 11], 0.0, 1.0).unwrap();
            let lhs: f64 = pad(&x, mode, 2, 3).unwrap().mul(&y).unwrap().sum();
            let rhs: f64 = x.mul(&pad_adjoint(&y, mode, 2, 3, 4, 5).unwrap()).unwrap().sum();
            assert!((lhs - rhs).abs() < 1e-10, "{mode}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn identity_1x1() {
        let x: Tensor<f64> = Rng::new(2).normal([1, 1, 3, 4], 0.0, 1.0).unwrap();
        let l = ConvLayer::new(Tensor::full([1, 1, 1, 1], 1.0), vec![0.0], (1, 1), (1, 1), PadMode::ZeroBoth).unwrap();
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn row_examples_against_brute_force() {
        let x = row(&[1.0, 2.0, 3.0, 4.0]);
        let circ = ones_1x3(PadMode::CircularAzimuth);
        let zero = ones_1x3(PadMode::ZeroBoth);
        // frozen from brute_conv
        assert_eq!(brute_conv(&x, &circ).data(), &[7.0, 6.0, 9.0, 8.0]);
        assert_eq!(brute_conv(&x, &zero).data(), &[3.0, 6.0, 9.0, 7.0]);
        assert_eq!(circ.forward(&x).unwrap().data(), &[7.0, 6.0, 9.0, 8.0]);
        assert_eq!(zero.forward(&x).unwrap().data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn matches_brute_force_on_random_geometries() {
        let mut rng = Rng::new(77);
        for trial in 0..60 {
            let mode = PadMode::ALL[trial % 3];
            let kh = [1, 3, 5][rng.below(3)];
            let kw = [1, 3, 5][rng.below(3)];
            let stride = (1 + rng.below(2), 1 + rng.below(3));
            let dil = (1 + rng.below(2), 1 + rng.below(2));
            let h = 3 + rng.below(5) + (kh / 2) * dil.0;
            let w = 3 + rng.below(6) + (kw / 2) * dil.1;
            let (ci, co) = (1 + rng.below(3), 1 + rng.below(3));
            let weight = rng.normal([co, ci, kh, kw], 0.0, 1.0).unwrap();
            let bias = rng.normal_vec(co, 1.0);
            let l = ConvLayer::new(weight, bias, stride, dil, mode).unwrap();
            let x: Tensor<f64> = rng.normal([2, ci, h, w], 0.0, 1.0).unwrap();
            let got = l.forward(&x).unwrap();
            let want = brute_conv(&x, &l);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "trial {trial}: {mode} k=({kh},{kw}) s={stride:?}");
        }
    }

    #[test]
    fn asymmetric_kernel_is_flipped() {
        // out(w) = sum_e K(e + M) x(w - e): a kernel [1, 0, 0] reads the right neighbour.
        let l = ConvLayer::new(
            Tensor::from_vec([1, 1, 1, 3], vec![1.0, 0.0, 0.0]).unwrap(),
            vec![0.0],
            (1, 1),
            (1, 1),
            PadMode::CircularAzimuth,
        )
        .unwrap();
        assert_eq!(l.forward(&row(&[1.0, 2.0, 3.0, 4.0])).unwrap().data(), &[2.0, 3.0, 4.0, 1.0]);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let l = ones_1x3(PadMode::ZeroBoth);
        let x = Tensor::<f64>::zeros([1, 2, 1, 4]);
        assert!(matches!(l.forward(&x), Err(Error::Shape(_))));
        let go = Tensor::<f64>::zeros([1, 1, 1, 3]);
        assert!(matches!(l.backward(&row(&[1.0, 2.0, 3.0, 4.0]), &go), Err(Error::Shape(_))));
    }

    #[test]
    fn even_kernel_rejected() {
        let r = ConvLayer::<f64>::new(Tensor::zeros([1, 1, 2, 3]), vec![0.0], (1, 1), (1, 1), PadMode::ZeroBoth);
        assert!(matches!(r, Err(Error::Param(_))));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = Rng::new(4);
        let l = ConvLayer::<f64>::random(&mut rng, 2, 3, (3, 3), (1, 1), PadMode::CircularAzimuth).unwrap();
        let x: Tensor<f64> = rng.normal([1, 2, 4, 5], 0.0, 1.0).unwrap();
        let g = l.backward(&x, &Tensor::zeros([1, 3, 4, 5])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule_1x1() {
        let w = 1.7;
        let l = ConvLayer::new(Tensor::full([1, 1, 1, 1], w), vec![0.3], (1, 1), (1, 1), PadMode::ZeroBoth).unwrap();
        let x = row(&[0.5, -2.0, 4.0]);
        let go = row(&[1.0, 2.0, -1.0]);
        let g = l.backward(&x, &go).unwrap();
        let want_w: f64 = x.data().iter().zip(go.data()).map(|(a, b)| a * b).sum();
        assert!((g.weight.data()[0] - want_w).abs() < 1e-12);
        assert_eq!(g.input.data(), &[w, 2.0 * w, -w]);
        assert!((g.bias[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circular_backward_wraps_across_seam() {
        // Gradient at output column 0 flows to columns W-1, 0, 1.
        let l = ones_1x3(PadMode::CircularAzimuth);
        let x = row(&[0.0; 5]);
        let go = row(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let g = l.backward(&x, &go).unwrap();
        assert_eq!(g.input.data(), &[1.0, 1.0, 0.0, 0.0, 1.0]);
    }
}

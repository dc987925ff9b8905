//! Instruments for looking at positional information inside a network:
//! influence maps, boundary line patterns, polynomial profiles of those
//! patterns, and a kernel-shape taxonomy.

use std::fmt;

use crate::conv::ConvLayer;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A network whose input Jacobian can be probed with vector-Jacobian products.
pub trait InputJacobian<T: Scalar> {
    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>>;
    /// `grad_out^T * d out / d input` evaluated at `input`.
    fn input_vjp(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>>;
}

/// A plain chain of convolutions with no nonlinearity in between.
#[derive(Debug, Clone)]
pub struct ConvStack<T = f32> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Scalar> ConvStack<T> {
    pub fn new(layers: Vec<ConvLayer<T>>) -> Self {
        ConvStack { layers }
    }

    /// Output of every layer, in order.
    pub fn activations(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let next = l.forward(acts.last().unwrap_or(input))?;
            acts.push(next);
        }
        Ok(acts)
    }
}

impl<T: Scalar> InputJacobian<T> for ConvStack<T> {
    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.activations(input)?.pop().unwrap_or_else(|| input.clone()))
    }

    fn input_vjp(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let acts = self.activations(input)?;
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = if i == 0 { input } else { &acts[i - 1] };
            g = l.backward(x, &g)?.input;
        }
        Ok(g)
    }
}

/// `|d out(target) / d input|` summed over input channels.
#[derive(Debug, Clone)]
pub struct InfluenceMap {
    /// `[1, 1, H, W]`, non-negative.
    pub values: Tensor<f64>,
    /// `(column, row)` of the probed output pixel.
    pub target: (usize, usize),
}

/// Exact Jacobian row of one output pixel via a one-hot backward pass.
/// `target` is `(column, row)`; batch item 0 is probed.
pub fn influence_map<T: Scalar, N: InputJacobian<T> + ?Sized>(
    net: &N,
    input: &Tensor<T>,
    target: (usize, usize),
    out_channel: usize,
) -> Result<InfluenceMap> {
    let out = net.forward(input)?;
    let [_, oc, oh, ow] = out.shape();
    let (tc, tr) = target;
    if tc >= ow || tr >= oh || out_channel >= oc {
        return Err(Error::Param(format!(
            "target (col {tc}, row {tr}, channel {out_channel}) outside output {oc}x{oh}x{ow}"
        )));
    }
    let mut g = Tensor::zeros(out.shape());
    g.set(0, out_channel, tr, tc, T::one());
    let gx = net.input_vjp(input, &g)?;
    let [_, c, h, w] = gx.shape();
    let values = Tensor::from_fn([1, 1, h, w], |_, _, y, x| (0..c).map(|ch| gx.at(0, ch, y, x).f64().abs()).sum());
    Ok(InfluenceMap { values, target })
}

fn column_means(im: &InfluenceMap) -> Vec<f64> {
    let [_, _, h, w] = im.values.shape();
    (0..w).map(|x| (0..h).map(|y| im.values.at(0, 0, y, x)).sum::<f64>() / h as f64).collect()
}

/// Largest jump between adjacent column means, seam pair `(W-1, 0)`
/// included, relative to the map's maximum.
pub fn wraparound_continuity(im: &InfluenceMap) -> f64 {
    let cm = column_means(im);
    let max = im.values.max_abs();
    if cm.is_empty() || max == 0.0 {
        return 0.0;
    }
    let w = cm.len();
    (0..w).map(|x| (cm[x] - cm[(x + 1) % w]).abs()).fold(0.0, f64::max) / max
}

/// The seam-pair term of [`wraparound_continuity`] alone.
pub fn seam_jump(im: &InfluenceMap) -> f64 {
    let cm = column_means(im);
    let max = im.values.max_abs();
    if cm.is_empty() || max == 0.0 {
        return 0.0;
    }
    (cm[cm.len() - 1] - cm[0]).abs() / max
}

/// Spatial axis of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Columns (width).
    Azimuth,
    /// Rows (height).
    Polar,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Middle 50% of `0..n` (the outer quartiles removed).
fn interior(n: usize) -> std::ops::Range<usize> {
    n / 4..n - n / 4
}

/// Reference profiles per `(n, c)`: for the azimuth axis, the median over
/// interior columns of each row; for the polar axis, the median over interior
/// rows of each column.
fn reference_profile<T: Scalar>(f: &Tensor<T>, axis: Axis, circular: bool) -> Vec<Vec<f64>> {
    let [b, c, h, w] = f.shape();
    let interior = |n: usize| if circular { 0..n } else { interior(n) };
    let mut refs = Vec::with_capacity(b * c);
    for n in 0..b {
        for ch in 0..c {
            let p = f.plane(n, ch);
            let prof = match axis {
                Axis::Azimuth => (0..h)
                    .map(|y| median(&mut interior(w).map(|x| p[y * w + x].f64()).collect::<Vec<_>>()))
                    .collect(),
                Axis::Polar => (0..w)
                    .map(|x| median(&mut interior(h).map(|y| p[y * w + x].f64()).collect::<Vec<_>>()))
                    .collect(),
            };
            refs.push(prof);
        }
    }
    refs
}

/// Per-index mean absolute deviation from the interior median profile.
///
/// For [`Axis::Azimuth`] entry `x` averages `|F(n,c,y,x) - ref(n,c,y)|` over
/// `n, c, y`; [`Axis::Polar`] is the same with rows and columns swapped.
pub fn line_pattern_stat<T: Scalar>(f: &Tensor<T>, axis: Axis) -> Result<Vec<f64>> {
    line_stat_impl(f, axis, false)
}

/// [`line_pattern_stat`] for features living on a cylinder: the measured axis
/// has no border, so the reference is the median over every index and the
/// statistic moves along with circular shifts of the feature.
pub fn line_pattern_stat_circular<T: Scalar>(f: &Tensor<T>, axis: Axis) -> Result<Vec<f64>> {
    line_stat_impl(f, axis, true)
}

fn line_stat_impl<T: Scalar>(f: &Tensor<T>, axis: Axis, circular: bool) -> Result<Vec<f64>> {
    let [b, c, h, w] = f.shape();
    if h < 3 || w < 3 {
        return Err(Error::Param(format!("line statistics need at least 3x3 planes, got {h}x{w}")));
    }
    let refs = reference_profile(f, axis, circular);
    let (len, across) = match axis {
        Axis::Azimuth => (w, h),
        Axis::Polar => (h, w),
    };
    let mut out = vec![0.0; len];
    for n in 0..b {
        for ch in 0..c {
            let p = f.plane(n, ch);
            let r = &refs[n * c + ch];
            for y in 0..h {
                for x in 0..w {
                    let v = p[y * w + x].f64();
                    match axis {
                        Axis::Azimuth => out[x] += (v - r[y]).abs(),
                        Axis::Polar => out[y] += (v - r[x]).abs(),
                    }
                }
            }
        }
    }
    let denom = (b * c * across) as f64;
    out.iter_mut().for_each(|v| *v /= denom);
    Ok(out)
}

/// Dense grid field: the azimuthal and polar deviation fields added
/// elementwise, averaged over batch and channels. Returns `[1, 1, H, W]`.
pub fn grid_stat<T: Scalar>(f: &Tensor<T>) -> Result<Tensor<f64>> {
    let [b, c, h, w] = f.shape();
    if h < 3 || w < 3 {
        return Err(Error::Param(format!("grid statistics need at least 3x3 planes, got {h}x{w}")));
    }
    let ra = reference_profile(f, Axis::Azimuth, false);
    let rp = reference_profile(f, Axis::Polar, false);
    let mut g = Tensor::zeros([1, 1, h, w]);
    let inv = 1.0 / (b * c) as f64;
    for n in 0..b {
        for ch in 0..c {
            let p = f.plane(n, ch);
            let (a, q) = (&ra[n * c + ch], &rp[n * c + ch]);
            for (i, out) in g.data_mut().iter_mut().enumerate() {
                let (y, x) = (i / w, i % w);
                let v = p[i].f64();
                *out += inv * ((v - a[y]).abs() + (v - q[x]).abs());
            }
        }
    }
    Ok(g)
}

/// Least-squares polynomial fit of a per-index statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalProfile {
    pub values: Vec<f64>,
    /// Coefficients in the scaled variable `t = (x - center) / half_range`,
    /// lowest degree first.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub half_range: f64,
    pub residual_rms: f64,
}

impl PositionalProfile {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.half_range;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Coefficients in the raw index variable `x`, lowest degree first.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        // p(t) with t = (x - a) / s; expand each t^j binomially.
        let (a, s) = (self.center, self.half_range);
        let d = self.degree();
        let mut raw = vec![0.0; d + 1];
        for (j, &cj) in self.coefficients.iter().enumerate() {
            let scale = cj / s.powi(j as i32);
            let mut binom = 1.0;
            for i in 0..=j {
                // term: C(j, i) x^i (-a)^(j-i)
                raw[i] += scale * binom * (-a).powi((j - i) as i32);
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        raw
    }
}

/// Fits `ys` against `xs` by solving the normal equations on centred and
/// scaled abscissae.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Result<PositionalProfile> {
    if xs.len() != ys.len() {
        return Err(Error::Size(format!("{} abscissae vs {} values", xs.len(), ys.len())));
    }
    if xs.len() <= degree {
        return Err(Error::Param(format!("{} samples cannot determine degree {degree}", xs.len())));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Numeric("polynomial fit with all abscissae equal".into()));
    }
    let center = 0.5 * (lo + hi);
    let half_range = 0.5 * (hi - lo);
    let p = degree + 1;
    // Normal matrix and right-hand side.
    let mut a = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - center) / half_range;
        let powers: Vec<f64> = (0..p).scan(1.0, |acc, _| {
            let v = *acc;
            *acc *= t;
            Some(v)
        })
        .collect();
        for i in 0..p {
            rhs[i] += powers[i] * y;
            for j in 0..p {
                a[i * p + j] += powers[i] * powers[j];
            }
        }
    }
    let coefficients = solve_dense(&mut a, &mut rhs, p)?;
    let mut profile = PositionalProfile { values: ys.to_vec(), coefficients, center, half_range, residual_rms: 0.0 };
    let sq: f64 = xs.iter().zip(ys).map(|(&x, &y)| (profile.eval(x) - y).powi(2)).sum();
    profile.residual_rms = (sq / xs.len() as f64).sqrt();
    Ok(profile)
}

/// Polynomial profile of a sequence indexed `0..len`.
pub fn fit_positional_profile(seq: &[f64], degree: usize) -> Result<PositionalProfile> {
    let xs: Vec<f64> = (0..seq.len()).map(|i| i as f64).collect();
    fit_polynomial(&xs, seq, degree)
}

/// Gaussian elimination with partial pivoting on a `p x p` system.
fn solve_dense(a: &mut [f64], b: &mut [f64], p: usize) -> Result<Vec<f64>> {
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i * p + col].abs().total_cmp(&a[j * p + col].abs()))
            .unwrap();
        if a[pivot * p + col].abs() < 1e-300 {
            return Err(Error::Numeric("singular normal equations".into()));
        }
        if pivot != col {
            for k in 0..p {
                a.swap(col * p + k, pivot * p + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..p {
            let f = a[row * p + col] / a[col * p + col];
            for k in col..p {
                a[row * p + k] -= f * a[col * p + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; p];
    for row in (0..p).rev() {
        let s: f64 = (row + 1..p).map(|k| a[row * p + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * p + row];
    }
    Ok(x)
}

/// Shape class of a 2D kernel slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelClass {
    Horizontal,
    Vertical,
    HplusV,
    Other,
}

impl fmt::Display for KernelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelClass::Horizontal => "horizontal",
            KernelClass::Vertical => "vertical",
            KernelClass::HplusV => "h+v",
            KernelClass::Other => "other",
        })
    }
}

pub const DEFAULT_KERNEL_TAU: f64 = 0.1;

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Classifies a row-major `rows x cols` kernel by how much of its variance
/// lives within rows versus within columns.
///
/// Rows that are (nearly) constant give horizontal stripes; columns that are
/// constant give vertical ones. A constant kernel counts as both.
pub fn classify_kernel(kernel: &[f64], rows: usize, cols: usize, tau: f64) -> Result<KernelClass> {
    if rows < 2 || cols < 2 || kernel.len() != rows * cols {
        return Err(Error::Param(format!("kernel must be at least 2x2, got {rows}x{cols} ({} values)", kernel.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::Param(format!("tau must be positive, got {tau}")));
    }
    let total = variance(kernel.iter().copied());
    if total < 1e-12 {
        return Ok(KernelClass::HplusV);
    }
    let v_row = (0..rows).map(|r| variance(kernel[r * cols..(r + 1) * cols].iter().copied())).sum::<f64>() / rows as f64;
    let v_col = (0..cols).map(|c| variance((0..rows).map(|r| kernel[r * cols + c]))).sum::<f64>() / cols as f64;
    let horizontal = v_row / total < tau;
    let vertical = v_col / total < tau;
    Ok(match (horizontal, vertical) {
        (true, true) => KernelClass::HplusV,
        (true, false) => KernelClass::Horizontal,
        (false, true) => KernelClass::Vertical,
        (false, false) => KernelClass::Other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::PadMode;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn ones_row(mode: PadMode) -> ConvLayer<f64> {
        ConvLayer::new(Tensor::full([1, 1, 1, 3], 1.0), vec![0.0], (1, 1), (1, 1), mode).unwrap()
    }

    fn support(im: &InfluenceMap) -> Vec<usize> {
        (0..im.values.width()).filter(|&x| im.values.at(0, 0, 0, x) != 0.0).collect()
    }

    #[test]
    fn circular_influence_wraps() {
        let net = ConvStack::new(vec![ones_row(PadMode::CircularAzimuth)]);
        let x = Tensor::<f64>::zeros([1, 1, 1, 5]);
        let im = influence_map(&net, &x, (0, 0), 0).unwrap();
        assert_eq!(support(&im), vec![0, 1, 4]);
        assert!([0, 1, 4].iter().all(|&c| im.values.at(0, 0, 0, c) == 1.0));
    }

    #[test]
    fn zero_pad_influence_stops_at_border() {
        let net = ConvStack::new(vec![ones_row(PadMode::ZeroBoth)]);
        let x = Tensor::<f64>::zeros([1, 1, 1, 5]);
        let im = influence_map(&net, &x, (0, 0), 0).unwrap();
        assert_eq!(support(&im), vec![0, 1]);
    }

    #[test]
    fn out_of_bounds_target() {
        let net = ConvStack::new(vec![ones_row(PadMode::ZeroBoth)]);
        let x = Tensor::<f64>::zeros([1, 1, 1, 5]);
        assert!(matches!(influence_map(&net, &x, (5, 0), 0), Err(Error::Param(_))));
        assert!(matches!(influence_map(&net, &x, (0, 1), 0), Err(Error::Param(_))));
    }

    #[test]
    fn continuity_examples() {
        let flat = InfluenceMap { values: Tensor::full([1, 1, 2, 6], 0.5), target: (0, 0) };
        assert_eq!(wraparound_continuity(&flat), 0.0);
        // step only between the last and the first column
        let step = InfluenceMap {
            values: Tensor::from_fn([1, 1, 2, 6], |_, _, _, x| if x < 3 { 1.0 } else { 1.0 + 0.25 * (x as f64 - 3.0) / 2.0 }),
            target: (0, 0),
        };
        // columns: 1, 1, 1, 1, 1.125, 1.25 -> seam jump 0.25, interior jumps 0.125
        assert!((wraparound_continuity(&step) - 0.25 / 1.25).abs() < 1e-12);
        assert!((seam_jump(&step) - 0.25 / 1.25).abs() < 1e-12);
    }

    #[test]
    fn line_stat_examples() {
        let c = Tensor::<f64>::full([1, 2, 5, 8], 3.0);
        assert!(line_pattern_stat(&c, Axis::Azimuth).unwrap().iter().all(|&v| v == 0.0));
        assert!(line_pattern_stat(&c, Axis::Polar).unwrap().iter().all(|&v| v == 0.0));
        let edge = Tensor::<f64>::from_fn([1, 1, 5, 8], |_, _, _, x| if x == 0 { 4.0 } else { 3.0 });
        let s = line_pattern_stat(&edge, Axis::Azimuth).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| v.abs() < 1e-12));
        assert!(line_pattern_stat(&Tensor::<f64>::zeros([1, 1, 2, 8]), Axis::Azimuth).is_err());
    }

    #[test]
    fn grid_is_sum_of_line_fields() {
        let f = Tensor::<f64>::from_fn([1, 1, 6, 8], |_, _, y, x| if x == 0 || y == 5 { 2.0 } else { 1.0 });
        let g = grid_stat(&f).unwrap();
        // boundary column shows on the azimuthal field, boundary row on the polar one
        assert!((g.at(0, 0, 2, 0) - 1.0).abs() < 1e-12);
        assert!((g.at(0, 0, 5, 3) - 1.0).abs() < 1e-12);
        assert!(g.at(0, 0, 2, 3).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let ys: Vec<f64> = (0..12).map(|x| 2.0 * x as f64 + 1.0).collect();
        let p = fit_positional_profile(&ys, 1).unwrap();
        assert!(p.residual_rms < 1e-8);
        let raw = p.raw_coefficients();
        assert!((raw[0] - 1.0).abs() < 1e-8 && (raw[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_fit() {
        let ys = vec![0.7; 9];
        for d in 0..4 {
            let p = fit_positional_profile(&ys, d).unwrap();
            assert!(p.residual_rms < 1e-8);
            assert!(p.coefficients[1..].iter().all(|c| c.abs() < 1e-8));
        }
    }

    #[test]
    fn quadratic_fit_matches_pseudo_inverse() {
        use nalgebra::{DMatrix, DVector};
        let xs: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let p = fit_positional_profile(&ys, 2).unwrap();
        // independent oracle: raw Vandermonde pseudo-inverse via SVD
        let v = DMatrix::from_fn(16, 3, |i, j| xs[i].powi(j as i32));
        let oracle = v.pseudo_inverse(1e-12).unwrap() * DVector::from_vec(ys.clone());
        for (a, b) in p.raw_coefficients().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn degenerate_fits_rejected() {
        assert!(matches!(fit_positional_profile(&[1.0], 0), Err(Error::Numeric(_))));
        assert!(matches!(fit_positional_profile(&[1.0, 2.0], 2), Err(Error::Param(_))));
        assert!(matches!(fit_polynomial(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], 1), Err(Error::Numeric(_))));
    }

    #[test]
    fn residual_non_increasing_in_degree() {
        let mut rng = Rng::new(5);
        let ys: Vec<f64> = (0..20).map(|_| rng.standard_normal()).collect();
        let r: Vec<f64> = (0..5).map(|d| fit_positional_profile(&ys, d).unwrap().residual_rms).collect();
        for w in r.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn kernel_classes() {
        let rows_const = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0];
        assert_eq!(classify_kernel(&rows_const, 3, 3, 0.1).unwrap(), KernelClass::Horizontal);
        let t = transpose(&rows_const, 3, 3);
        assert_eq!(classify_kernel(&t, 3, 3, 0.1).unwrap(), KernelClass::Vertical);
        assert_eq!(classify_kernel(&[0.3; 9], 3, 3, 0.1).unwrap(), KernelClass::HplusV);
        let checker = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        assert_eq!(classify_kernel(&checker, 3, 3, 0.1).unwrap(), KernelClass::Other);
        assert!(classify_kernel(&[1.0, 2.0], 1, 2, 0.1).is_err());
    }

    fn transpose(k: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        (0..cols).flat_map(|c| (0..rows).map(move |r| k[r * cols + c])).collect()
    }

    proptest! {
        #[test]
        fn transpose_swaps_orientation(k in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let a = classify_kernel(&k, 3, 3, 0.1).unwrap();
            let b = classify_kernel(&transpose(&k, 3, 3), 3, 3, 0.1).unwrap();
            let swapped = match a {
                KernelClass::Horizontal => KernelClass::Vertical,
                KernelClass::Vertical => KernelClass::Horizontal,
                other => other,
            };
            prop_assert_eq!(b, swapped);
        }

        #[test]
        fn circular_line_stat_is_shift_covariant(
            vals in proptest::collection::vec(-3.0f64..3.0, 4 * 9),
            k in 0isize..9,
        ) {
            let f = Tensor::from_vec([1, 1, 4, 9], vals).unwrap();
            let s = line_pattern_stat_circular(&f, Axis::Azimuth).unwrap();
            let shifted = line_pattern_stat_circular(&f.circular_shift_azimuth(k), Axis::Azimuth).unwrap();
            let s_t = Tensor::from_vec([1, 1, 1, 9], s).unwrap().circular_shift_azimuth(k);
            for (a, b) in shifted.iter().zip(s_t.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

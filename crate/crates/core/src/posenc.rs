//! 2D sinusoidal positional encoding and the learnable 1x1 embedding that
//! mixes it into encoder features.
//!
//! Channel layout of a [`SpeVolume`] with `a` azimuthal and `p` polar
//! frequency pairs:
//!
//! ```text
//! [sin(w_0 x), cos(w_0 x), ..., sin(w_{a-1} x), cos(w_{a-1} x),   azimuth x = column
//!  sin(w_0 y), cos(w_0 y), ..., sin(w_{p-1} y), cos(w_{p-1} y)]   polar   y = row
//! ```
//!
//! with `w_k = 10000^(-2k / d)` and `d = 2 * pairs` the channel count of the
//! axis. Within each axis the first half of the pairs (high frequency) is the
//! relative group, the second half (low frequency) the absolute group.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, MatRef, Scalar, Tensor};

/// How pixel positions become phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SpeMode {
    /// Raw pixel indices are the angles.
    #[default]
    Index,
    /// Azimuthal frequencies snapped to a whole number of periods over the
    /// width, so the encoding wraps seamlessly.
    Cyclic,
}

impl FromStr for SpeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "index" => Ok(SpeMode::Index),
            "cyclic" => Ok(SpeMode::Cyclic),
            other => Err(Error::Config(format!("unknown SPE mode {other:?}"))),
        }
    }
}

impl fmt::Display for SpeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeMode::Index => "index",
            SpeMode::Cyclic => "cyclic",
        })
    }
}

/// Channel groups: relative/absolute x azimuthal/polar, or everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PeGroup {
    RA,
    RP,
    AA,
    AP,
    All,
}

impl PeGroup {
    pub const ALL_GROUPS: [PeGroup; 5] = [PeGroup::RA, PeGroup::RP, PeGroup::AA, PeGroup::AP, PeGroup::All];

    pub fn name(self) -> &'static str {
        match self {
            PeGroup::RA => "RA",
            PeGroup::RP => "RP",
            PeGroup::AA => "AA",
            PeGroup::AP => "AP",
            PeGroup::All => "ALL",
        }
    }

    /// Azimuth-constant groups commute with azimuthal shifts.
    pub fn is_polar_only(self) -> bool {
        matches!(self, PeGroup::RP | PeGroup::AP)
    }
}

impl fmt::Display for PeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RA" => Ok(PeGroup::RA),
            "RP" => Ok(PeGroup::RP),
            "AA" => Ok(PeGroup::AA),
            "AP" => Ok(PeGroup::AP),
            "ALL" => Ok(PeGroup::All),
            other => Err(Error::Config(format!("unknown PE group {other:?}"))),
        }
    }
}

/// Frequency of pair `k` for an axis with `pairs` sin/cos pairs.
pub fn frequency(k: usize, pairs: usize) -> f64 {
    let d = (2 * pairs) as f64;
    10000f64.powf(-2.0 * k as f64 / d)
}

/// Azimuthal frequency actually used for pair `k` in the given mode.
pub fn azimuth_frequency(k: usize, pairs: usize, width: usize, mode: SpeMode) -> f64 {
    let w = frequency(k, pairs);
    match mode {
        SpeMode::Index => w,
        SpeMode::Cyclic => {
            let periods = (w * width as f64 / (2.0 * PI)).round().max(1.0);
            2.0 * PI * periods / width as f64
        }
    }
}

/// Precomputed `[1, 2a + 2p, H, W]` encoding stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeVolume {
    pub data: Tensor<f64>,
    pub az_pairs: usize,
    pub pol_pairs: usize,
    pub mode: SpeMode,
}

pub fn build_spe(h: usize, w: usize, az_pairs: usize, pol_pairs: usize, mode: SpeMode) -> Result<SpeVolume> {
    if h == 0 || w == 0 || az_pairs == 0 || pol_pairs == 0 {
        return Err(Error::Param(format!(
            "build_spe needs positive sizes, got H={h} W={w} pairs=({az_pairs}, {pol_pairs})"
        )));
    }
    let az: Vec<f64> = (0..az_pairs).map(|k| azimuth_frequency(k, az_pairs, w, mode)).collect();
    let pol: Vec<f64> = (0..pol_pairs).map(|k| frequency(k, pol_pairs)).collect();
    let channels = 2 * (az_pairs + pol_pairs);
    let data = Tensor::from_fn([1, channels, h, w], |_, c, y, x| {
        if c < 2 * az_pairs {
            let phase = az[c / 2] * x as f64;
            if c % 2 == 0 {
                phase.sin()
            } else {
                phase.cos()
            }
        } else {
            let c = c - 2 * az_pairs;
            let phase = pol[c / 2] * y as f64;
            if c % 2 == 0 {
                phase.sin()
            } else {
                phase.cos()
            }
        }
    });
    Ok(SpeVolume { data, az_pairs, pol_pairs, mode })
}

impl SpeVolume {
    pub fn channels(&self) -> usize {
        self.data.channels()
    }

    /// Channel indices of a group, in layout order.
    pub fn group_channels(&self, group: PeGroup) -> Vec<usize> {
        let axis = |offset: usize, pairs: usize, relative: bool| -> Vec<usize> {
            let split = pairs / 2;
            let ks = if relative { 0..split } else { split..pairs };
            ks.flat_map(|k| [offset + 2 * k, offset + 2 * k + 1]).collect()
        };
        let pol_off = 2 * self.az_pairs;
        match group {
            PeGroup::RA => axis(0, self.az_pairs, true),
            PeGroup::AA => axis(0, self.az_pairs, false),
            PeGroup::RP => axis(pol_off, self.pol_pairs, true),
            PeGroup::AP => axis(pol_off, self.pol_pairs, false),
            PeGroup::All => (0..self.channels()).collect(),
        }
    }

    pub fn select_group(&self, group: PeGroup) -> Tensor<f64> {
        self.data
            .select_channels(&self.group_channels(group))
            .expect("group channels are in range by construction")
    }
}

/// Number of channels a group selects for the given pair counts.
pub fn group_size(group: PeGroup, az_pairs: usize, pol_pairs: usize) -> usize {
    let rel = |p: usize| 2 * (p / 2);
    let abs = |p: usize| 2 * (p - p / 2);
    match group {
        PeGroup::RA => rel(az_pairs),
        PeGroup::AA => abs(az_pairs),
        PeGroup::RP => rel(pol_pairs),
        PeGroup::AP => abs(pol_pairs),
        PeGroup::All => 2 * (az_pairs + pol_pairs),
    }
}

/// Adds `K_pe * S` to the features feeding a host convolution, where `K_pe`
/// is a bias-free 1x1 convolution from the selected encoding channels to the
/// host's input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnablePeLayer<T = f32> {
    /// `[C, S, 1, 1]`.
    pub weight: Tensor<T>,
    pub group: PeGroup,
}

impl<T: Scalar> LearnablePeLayer<T> {
    pub fn new(weight: Tensor<T>, group: PeGroup) -> Result<Self> {
        let [_, _, kh, kw] = weight.shape();
        if (kh, kw) != (1, 1) {
            return Err(Error::Param(format!("positional embedding kernel must be 1x1, got {kh}x{kw}")));
        }
        Ok(LearnablePeLayer { weight, group })
    }

    pub fn random(rng: &mut Rng, channels: usize, spe_channels: usize, group: PeGroup) -> Result<Self> {
        let std = 1.0 / (spe_channels.max(1) as f64).sqrt();
        Self::new(rng.normal([channels, spe_channels, 1, 1], 0.0, std)?, group)
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn spe_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    /// The `[1, C, H, W]` map `K_pe * S`.
    pub fn embedding(&self, spe_sel: &Tensor<T>) -> Result<Tensor<T>> {
        let [one, s, h, w] = spe_sel.shape();
        if one != 1 || s != self.spe_channels() {
            return Err(Error::Shape(format!(
                "encoding selection {:?} does not match embedding with {} inputs",
                spe_sel.shape(),
                self.spe_channels()
            )));
        }
        let c = self.channels();
        let mut out = vec![T::zero(); c * h * w];
        matmul(MatRef::row_major(self.weight.data(), c, s), MatRef::row_major(spe_sel.data(), s, h * w), &mut out, false);
        Ok(Tensor::from_raw([1, c, h, w], out))
    }

    /// `F_in + K_pe * S`, broadcast over the batch.
    pub fn apply(&self, x: &Tensor<T>, spe_sel: &Tensor<T>) -> Result<Tensor<T>> {
        let [_, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!("embedding produces {} channels, features have {c}", self.channels())));
        }
        if spe_sel.height() != h || spe_sel.width() != w {
            return Err(Error::Shape(format!(
                "encoding resolution {}x{} differs from features {h}x{w}",
                spe_sel.height(),
                spe_sel.width()
            )));
        }
        let emb = self.embedding(spe_sel)?;
        let mut out = x.clone();
        for n in 0..x.batch() {
            out.item_mut(n).iter_mut().zip(emb.data()).for_each(|(o, &e)| *o += e);
        }
        out.ensure_finite("learnable_pe_apply")?;
        Ok(out)
    }

    /// Gradients `(d input, d weight)`; the input gradient passes through.
    pub fn backward(&self, spe_sel: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let [b, c, h, w] = grad_out.shape();
        let s = self.spe_channels();
        if c != self.channels() || spe_sel.shape() != [1, s, h, w] {
            return Err(Error::Shape("learnable PE backward: shape mismatch".into()));
        }
        let hw = h * w;
        let mut gw = vec![T::zero(); c * s];
        for n in 0..b {
            matmul(
                MatRef::row_major(grad_out.item(n), c, hw),
                MatRef::row_major(spe_sel.data(), s, hw).t(),
                &mut gw,
                true,
            );
        }
        Ok((grad_out.clone(), Tensor::from_raw([c, s, 1, 1], gw)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{ConvLayer, PadMode};

    #[test]
    fn origin_column_is_sin0_cos1() {
        let spe = build_spe(5, 9, 4, 3, SpeMode::Index).unwrap();
        for y in 0..5 {
            for k in 0..4 {
                assert_eq!(spe.data.at(0, 2 * k, y, 0), 0.0);
                assert_eq!(spe.data.at(0, 2 * k + 1, y, 0), 1.0);
            }
        }
    }

    #[test]
    fn unit_frequency_at_theta_one() {
        let spe = build_spe(2, 4, 2, 2, SpeMode::Index).unwrap();
        assert!((spe.data.at(0, 0, 0, 1) - 0.841471).abs() < 1e-6);
    }

    #[test]
    fn cyclic_full_period_shift() {
        let spe = build_spe(4, 64, 4, 2, SpeMode::Cyclic).unwrap();
        let shifted = spe.data.circular_shift_azimuth(64);
        assert_eq!(spe.data, shifted);
        // value at w = W via the generating formula equals w = 0
        for k in 0..4 {
            let om = azimuth_frequency(k, 4, 64, SpeMode::Cyclic);
            assert!(((om * 64.0).sin() - 0.0).abs() < 1e-6);
            assert!(((om * 64.0).cos() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(build_spe(0, 4, 1, 1, SpeMode::Index), Err(Error::Param(_))));
        assert!(matches!(build_spe(4, 4, 0, 1, SpeMode::Index), Err(Error::Param(_))));
    }

    #[test]
    fn groups_partition_channels() {
        let spe = build_spe(3, 5, 4, 4, SpeMode::Index).unwrap();
        assert_eq!(spe.select_group(PeGroup::All), spe.data);
        let mut seen = vec![0; spe.channels()];
        for g in [PeGroup::RA, PeGroup::RP, PeGroup::AA, PeGroup::AP] {
            let ch = spe.group_channels(g);
            assert_eq!(ch.len(), group_size(g, 4, 4));
            ch.iter().for_each(|&c| seen[c] += 1);
        }
        assert!(seen.iter().all(|&n| n == 1));
        let ap = spe.select_group(PeGroup::AP);
        assert_eq!(ap.channels(), 4);
        for c in 0..4 {
            for y in 0..3 {
                assert!((0..5).all(|x| ap.at(0, c, y, x) == ap.at(0, c, y, 0)));
            }
        }
    }

    #[test]
    fn zero_kernel_is_identity() {
        let mut rng = Rng::new(1);
        let x: Tensor<f64> = rng.normal([2, 3, 4, 6], 0.0, 1.0).unwrap();
        let spe = build_spe(4, 6, 2, 2, SpeMode::Index).unwrap().select_group(PeGroup::All);
        let l = LearnablePeLayer::new(Tensor::zeros([3, 8, 1, 1]), PeGroup::All).unwrap();
        assert_eq!(l.apply(&x, &spe).unwrap(), x);
    }

    #[test]
    fn one_hot_kernel_selects_channel() {
        let mut rng = Rng::new(2);
        let x: Tensor<f64> = rng.normal([2, 2, 4, 6], 0.0, 1.0).unwrap();
        let spe = build_spe(4, 6, 2, 2, SpeMode::Index).unwrap().select_group(PeGroup::All);
        let mut wt = Tensor::zeros([2, 8, 1, 1]);
        wt.set(0, 5, 0, 0, 1.0);
        wt.set(1, 5, 0, 0, 1.0);
        let l = LearnablePeLayer::new(wt, PeGroup::All).unwrap();
        let y = l.apply(&x, &spe).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                for yy in 0..4 {
                    for xx in 0..6 {
                        assert_eq!(y.at(n, c, yy, xx), x.at(n, c, yy, xx) + spe.at(0, 5, yy, xx));
                    }
                }
            }
        }
    }

    #[test]
    fn matches_pointwise_conv_plus_add() {
        let mut rng = Rng::new(3);
        let x: Tensor<f64> = rng.normal([2, 4, 5, 7], 0.0, 1.0).unwrap();
        let spe = build_spe(5, 7, 3, 3, SpeMode::Index).unwrap().select_group(PeGroup::AA);
        assert_eq!(spe.channels(), 4);
        let spe3 = spe.select_channels(&[0, 1, 2]).unwrap();
        let l = LearnablePeLayer::<f64>::random(&mut rng, 4, 3, PeGroup::AA).unwrap();
        let conv = ConvLayer::new(l.weight.clone(), vec![0.0; 4], (1, 1), (1, 1), PadMode::ZeroBoth).unwrap();
        let emb = conv.forward(&spe3).unwrap();
        let want = Tensor::from_fn(x.shape(), |n, c, h, w| x.at(n, c, h, w) + emb.at(0, c, h, w));
        assert!(l.apply(&x, &spe3).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn resolution_mismatch_is_shape_error() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 6]);
        let spe = build_spe(4, 8, 1, 1, SpeMode::Index).unwrap().select_group(PeGroup::All);
        let l = LearnablePeLayer::new(Tensor::zeros([2, 4, 1, 1]), PeGroup::All).unwrap();
        assert!(matches!(l.apply(&x, &spe), Err(Error::Shape(_))));
    }

    #[test]
    fn non_pointwise_kernel_rejected() {
        assert!(LearnablePeLayer::<f32>::new(Tensor::zeros([2, 2, 3, 3]), PeGroup::AP).is_err());
    }

    #[test]
    fn index_mode_columns_are_distinct() {
        let spe = build_spe(1, 512, 4, 1, SpeMode::Index).unwrap();
        let cols: Vec<Vec<f64>> = (0..512).map(|x| (0..8).map(|c| spe.data.at(0, c, 0, x)).collect()).collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..512 {
            for j in i + 1..512 {
                let d = cols[i].iter().zip(&cols[j]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 1e-4, "min pairwise distance {min_dist}");
    }
}

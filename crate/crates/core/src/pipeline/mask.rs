use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Known-region layout: a contiguous band of columns centred in azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub known_fraction: f64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec { known_fraction: 0.5 }
    }
}

impl MaskSpec {
    pub fn new(known_fraction: f64) -> Result<Self> {
        if !(known_fraction > 0.0 && known_fraction <= 1.0) {
            return Err(Error::Param(format!("known fraction must lie in (0, 1], got {known_fraction}")));
        }
        Ok(MaskSpec { known_fraction })
    }

    pub fn known_columns(&self, width: usize) -> usize {
        ((self.known_fraction * width as f64).round() as usize).min(width)
    }

    /// Half-open column range `[start, end)` of the known band.
    pub fn band(&self, width: usize) -> (usize, usize) {
        let k = self.known_columns(width);
        let start = width / 2 - k / 2;
        (start, start + k)
    }
}

/// `[1, 1, H, W]` mask with 1 on known pixels.
pub fn make_mask<T: Scalar>(spec: &MaskSpec, height: usize, width: usize) -> Result<Tensor<T>> {
    MaskSpec::new(spec.known_fraction)?;
    let (start, end) = spec.band(width);
    Ok(Tensor::from_fn([1, 1, height, width], |_, _, _, x| {
        if x >= start && x < end {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// Zeroes the unknown pixels of `image`, broadcasting the mask over channels
/// and batch.
pub fn apply_mask<T: Scalar>(image: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = image.shape();
    let [mn, mc, mh, mw] = mask.shape();
    if mc != 1 || (mn != 1 && mn != n) || (mh, mw) != (h, w) {
        return Err(Error::Shape(format!("mask {:?} cannot be applied to {:?}", mask.shape(), image.shape())));
    }
    let mut out = image.clone();
    for i in 0..n {
        let m = mask.plane(if mn == 1 { 0 } else { i }, 0);
        for ch in 0..c {
            out.plane_mut(i, ch).iter_mut().zip(m).for_each(|(v, &mv)| *v *= mv);
        }
    }
    Ok(out)
}

/// Repeats a `[1, 1, H, W]` mask over `n` batch items.
pub fn batch_mask<T: Scalar>(mask: &Tensor<T>, n: usize) -> Tensor<T> {
    let [_, _, h, w] = mask.shape();
    Tensor::from_fn([n, 1, h, w], |_, _, y, x| mask.at(0, 0, y, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_knowledge() {
        let m: Tensor<f32> = make_mask(&MaskSpec::new(1.0).unwrap(), 4, 16).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_of_512() {
        let m: Tensor<f32> = make_mask(&MaskSpec::default(), 2, 512).unwrap();
        let cols: Vec<usize> = (0..512).filter(|&x| m.at(0, 0, 0, x) == 1.0).collect();
        assert_eq!(cols.len(), 256);
        assert_eq!(cols[0], 128);
        assert_eq!(*cols.last().unwrap(), 383);
    }

    #[test]
    fn quarter_of_8() {
        let m: Tensor<f32> = make_mask(&MaskSpec::new(0.25).unwrap(), 1, 8).unwrap();
        let cols: Vec<usize> = (0..8).filter(|&x| m.at(0, 0, 0, x) == 1.0).collect();
        assert_eq!(cols, vec![3, 4]);
    }

    #[test]
    fn fraction_out_of_range() {
        for f in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(make_mask::<f32>(&MaskSpec { known_fraction: f }, 2, 8), Err(Error::Param(_))));
        }
    }
}

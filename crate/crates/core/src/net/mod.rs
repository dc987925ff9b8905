//! Generator and discriminator built from cylinder-style layers.

mod discriminator;
mod generator;
mod spectral;

pub use discriminator::{DiscCache, Discriminator, DiscriminatorConfig, DiscriminatorGrads};
pub use generator::{
    DecoderStage, EncoderStage, GenCache, Generator, GeneratorConfig, GeneratorGrads, GeneratorInputProbe,
    azimuth_shift_deviation, composite,
};
pub use spectral::{spectral_norm_backward, spectral_normalize, SpectralNormState};

use crate::tensor::{Scalar, Tensor};

/// Named view of one parameter buffer.
#[derive(Debug)]
pub struct ParamRef<'a, T> {
    pub name: String,
    pub shape: [usize; 4],
    pub data: &'a [T],
}

/// Mutable counterpart of [`ParamRef`].
#[derive(Debug)]
pub struct ParamMut<'a, T> {
    pub name: String,
    pub shape: [usize; 4],
    pub data: &'a mut [T],
}

/// Anything with an ordered list of named parameter buffers. Gradients are
/// returned as `Vec<Vec<T>>` in the same order.
pub trait Parameterized<T> {
    fn params(&self) -> Vec<ParamRef<'_, T>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }
}

/// Nearest-neighbour 2x upsampling of both spatial axes.
pub fn upsample_nearest2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    Tensor::from_fn([n, c, 2 * h, 2 * w], |i, j, y, xx| x.at(i, j, y / 2, xx / 2))
}

/// Adjoint of [`upsample_nearest2`]: sums each 2x2 block.
pub fn upsample_nearest2_adjoint<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = g.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros([n, c, h, w]);
    for i in 0..n {
        for j in 0..c {
            let src = g.plane(i, j);
            let dst = out.plane_mut(i, j);
            for y in 0..h2 {
                for x in 0..w2 {
                    dst[(y / 2) * w + x / 2] += src[y * w2 + x];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn upsample_adjoint_is_transpose() {
        let mut rng = Rng::new(1);
        let x: Tensor<f64> = rng.normal([2, 3, 3, 4], 0.0, 1.0).unwrap();
        let y: Tensor<f64> = rng.normal([2, 3, 6, 8], 0.0, 1.0).unwrap();
        let lhs = upsample_nearest2(&x).mul(&y).unwrap().sum();
        let rhs = x.mul(&upsample_nearest2_adjoint(&y)).unwrap().sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

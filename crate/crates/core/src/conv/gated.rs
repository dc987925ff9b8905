use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::{conv_backward_shared, conv_forward_shared, ConvLayer, PadMode};

/// ELU with alpha = 1.
#[inline]
pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

#[inline]
pub fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `elu(feature_conv(x)) * sigmoid(gate_conv(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedConvLayer<T = f32> {
    pub feature: ConvLayer<T>,
    pub gate: ConvLayer<T>,
}

/// Pre-activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct GatedCache<T> {
    input: Tensor<T>,
    feature_pre: Tensor<T>,
    gate_pre: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct GatedGrads<T> {
    pub input: Tensor<T>,
    pub feature_weight: Tensor<T>,
    pub feature_bias: Vec<T>,
    pub gate_weight: Tensor<T>,
    pub gate_bias: Vec<T>,
}

impl<T: Scalar> GatedConvLayer<T> {
    pub fn new(feature: ConvLayer<T>, gate: ConvLayer<T>) -> Result<Self> {
        if !feature.same_geometry(&gate) {
            return Err(Error::Config("gated conv: feature and gate convs differ in geometry".into()));
        }
        Ok(GatedConvLayer { feature, gate })
    }

    pub fn random(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad_mode: PadMode,
    ) -> Result<Self> {
        let feature = ConvLayer::random(rng, c_in, c_out, (kernel, kernel), (stride, stride), pad_mode)?;
        let gate = ConvLayer::random(rng, c_in, c_out, (kernel, kernel), (stride, stride), pad_mode)?;
        Self::new(feature, gate)
    }

    pub fn out_channels(&self) -> usize {
        self.feature.out_channels()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, GatedCache<T>)> {
        if !self.feature.same_geometry(&self.gate) {
            return Err(Error::Config("gated conv: feature and gate convs differ in geometry".into()));
        }
        let mut pre = conv_forward_shared(x, &[&self.feature, &self.gate])?;
        let gate_pre = pre.pop().unwrap();
        let feature_pre = pre.pop().unwrap();
        let out = feature_pre.zip_map(&gate_pre, |f, g| elu(f) * sigmoid(g))?;
        Ok((out, GatedCache { input: x.clone(), feature_pre, gate_pre }))
    }

    pub fn backward(&self, cache: &GatedCache<T>, grad_out: &Tensor<T>) -> Result<GatedGrads<T>> {
        if grad_out.shape() != cache.feature_pre.shape() {
            return Err(Error::Shape(format!(
                "gated conv grad_out is {:?}, expected {:?}",
                grad_out.shape(),
                cache.feature_pre.shape()
            )));
        }
        let n = grad_out.len();
        let mut g_feat = Vec::with_capacity(n);
        let mut g_gate = Vec::with_capacity(n);
        for ((&go, &f), &g) in grad_out.data().iter().zip(cache.feature_pre.data()).zip(cache.gate_pre.data()) {
            let s = sigmoid(g);
            g_feat.push(go * s * elu_grad(f));
            g_gate.push(go * elu(f) * s * (T::one() - s));
        }
        let shape = grad_out.shape();
        let g_feat = Tensor::from_raw(shape, g_feat);
        let g_gate = Tensor::from_raw(shape, g_gate);
        let (input, mut params) =
            conv_backward_shared(&cache.input, &[&self.feature, &self.gate], &[&g_feat, &g_gate])?;
        let (gate_weight, gate_bias) = params.pop().unwrap();
        let (feature_weight, feature_bias) = params.pop().unwrap();
        Ok(GatedGrads { input, feature_weight, feature_bias, gate_weight, gate_bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_with_gate_bias(rng: &mut Rng, bias: f64) -> GatedConvLayer<f64> {
        let feature = ConvLayer::random(rng, 2, 3, (3, 3), (1, 1), PadMode::CircularAzimuth).unwrap();
        let gate = ConvLayer::new(Tensor::zeros([3, 2, 3, 3]), vec![bias; 3], (1, 1), (1, 1), PadMode::CircularAzimuth)
            .unwrap();
        GatedConvLayer::new(feature, gate).unwrap()
    }

    #[test]
    fn open_gate_passes_features() {
        let mut rng = Rng::new(1);
        let l = layer_with_gate_bias(&mut rng, 20.0);
        let x: Tensor<f64> = rng.normal([1, 2, 4, 6], 0.0, 1.0).unwrap();
        let want = l.feature.forward(&x).unwrap().map(elu);
        assert!(l.forward(&x).unwrap().max_abs_diff(&want).unwrap() < 1e-6);
    }

    #[test]
    fn closed_gate_blocks() {
        let mut rng = Rng::new(2);
        let l = layer_with_gate_bias(&mut rng, -20.0);
        let x: Tensor<f64> = rng.normal([1, 2, 4, 6], 0.0, 1.0).unwrap();
        assert!(l.forward(&x).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn matches_composition_of_public_convs() {
        let mut rng = Rng::new(3);
        let l = GatedConvLayer::<f64>::random(&mut rng, 3, 2, 3, 2, PadMode::CircularAzimuthMirrorPolar).unwrap();
        let x: Tensor<f64> = rng.normal([2, 3, 6, 8], 0.0, 1.0).unwrap();
        let f = l.feature.forward(&x).unwrap();
        let g = l.gate.forward(&x).unwrap();
        let want = f.zip_map(&g, |a, b| elu(a) * sigmoid(b)).unwrap();
        assert!(l.forward(&x).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn mismatched_geometry_rejected() {
        let mut rng = Rng::new(4);
        let f = ConvLayer::<f64>::random(&mut rng, 2, 3, (3, 3), (1, 1), PadMode::CircularAzimuth).unwrap();
        let g = ConvLayer::<f64>::random(&mut rng, 2, 3, (3, 3), (1, 1), PadMode::ZeroBoth).unwrap();
        assert!(matches!(GatedConvLayer::new(f, g), Err(Error::Config(_))));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}

use crate::conv::{ConvLayer, PadMode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::spectral::{spectral_norm_backward, spectral_normalize, SpectralNormState};
use super::{ParamMut, ParamRef, Parameterized};

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    /// Output channels of the stride-2 stages; a final 1-channel conv follows.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pad_mode: PadMode,
    pub image_channels: usize,
    /// Power iterations per training step.
    pub train_iters: usize,
    /// Power iterations before evaluation.
    pub eval_iters: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            channels: vec![32, 64, 128, 128],
            kernel: 3,
            pad_mode: PadMode::CircularAzimuth,
            image_channels: 3,
            train_iters: 1,
            eval_iters: 50,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(format!("discriminator channels must be non-empty and positive: {:?}", self.channels)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("discriminator kernel must be odd, got {}", self.kernel)));
        }
        if self.train_iters == 0 || self.eval_iters == 0 {
            return Err(Error::Config("power iteration counts must be positive".into()));
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        1 << self.channels.len()
    }
}

/// Patch discriminator whose conv weights are divided by their estimated
/// spectral norm. The normalized weights are snapshotted by
/// [`Discriminator::refresh`], so the forward pass itself is pure.
pub struct Discriminator<T = f32> {
    pub config: DiscriminatorConfig,
    /// Raw (unnormalized) layers.
    pub layers: Vec<ConvLayer<T>>,
    pub states: Vec<SpectralNormState>,
    normalized: Vec<ConvLayer<T>>,
    sigmas: Vec<f64>,
}

impl<T: Scalar> Clone for Discriminator<T> {
    fn clone(&self) -> Self {
        Discriminator {
            config: self.config.clone(),
            layers: self.layers.clone(),
            states: self.states.clone(),
            normalized: self.normalized.clone(),
            sigmas: self.sigmas.clone(),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Discriminator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discriminator")
            .field("config", &self.config)
            .field("sigmas", &self.sigmas)
            .finish()
    }
}

pub struct DiscCache<T> {
    /// Input of every layer.
    inputs: Vec<Tensor<T>>,
    /// Pre-activation of every layer but the last.
    pre: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorGrads<T> {
    pub input: Tensor<T>,
    /// In [`Parameterized::params`] order, with respect to the raw weights.
    pub params: Vec<Vec<T>>,
}

fn matrix_dims<T: Scalar>(l: &ConvLayer<T>) -> (usize, usize) {
    let [co, ci, kh, kw] = l.weight.shape();
    (co, ci * kh * kw)
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut layers = Vec::with_capacity(config.channels.len() + 1);
        let mut c_in = config.image_channels;
        for &c in &config.channels {
            layers.push(ConvLayer::random(rng, c_in, c, (k, k), (2, 2), config.pad_mode)?);
            c_in = c;
        }
        layers.push(ConvLayer::random(rng, c_in, 1, (k, k), (1, 1), config.pad_mode)?);
        let states = layers
            .iter()
            .map(|l| {
                let (r, c) = matrix_dims(l);
                SpectralNormState::new(r, c, rng)
            })
            .collect();
        let mut d = Discriminator { config, layers, states, normalized: Vec::new(), sigmas: Vec::new() };
        let iters = d.config.eval_iters;
        d.refresh(iters)?;
        Ok(d)
    }

    /// Advances every power iteration by `n_iters` and snapshots the
    /// normalized weights used by the next forward/backward passes.
    pub fn refresh(&mut self, n_iters: usize) -> Result<()> {
        let mut normalized = Vec::with_capacity(self.layers.len());
        let mut sigmas = Vec::with_capacity(self.layers.len());
        for (l, st) in self.layers.iter().zip(self.states.iter_mut()) {
            let (r, c) = matrix_dims(l);
            let (w, sigma) = spectral_normalize(l.weight.data(), r, c, st, n_iters)?;
            let mut nl = l.clone();
            nl.weight = Tensor::from_vec(l.weight.shape(), w)?;
            normalized.push(nl);
            sigmas.push(sigma);
        }
        self.normalized = normalized;
        self.sigmas = sigmas;
        Ok(())
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// The weights the forward pass actually uses.
    pub fn normalized_layers(&self) -> &[ConvLayer<T>] {
        &self.normalized
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(image)?.0)
    }

    pub fn forward_cached(&self, image: &Tensor<T>) -> Result<(Tensor<T>, DiscCache<T>)> {
        if image.channels() != self.config.image_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {}",
                self.config.image_channels,
                image.channels()
            )));
        }
        let s = self.config.total_stride();
        if image.height() % s != 0 || image.width() % s != 0 {
            return Err(Error::Shape(format!(
                "discriminator input {}x{} is not divisible by {s}",
                image.height(),
                image.width()
            )));
        }
        let slope = T::of(LEAKY_SLOPE);
        let last = self.normalized.len() - 1;
        let mut inputs = Vec::with_capacity(self.normalized.len());
        let mut pre = Vec::with_capacity(last);
        let mut act = image.clone();
        for (i, l) in self.normalized.iter().enumerate() {
            let z = l.forward(&act)?;
            inputs.push(act);
            if i == last {
                act = z;
            } else {
                act = z.map(|v| if v > T::zero() { v } else { v * slope });
                pre.push(z);
            }
        }
        act.ensure_finite("discriminator_forward")?;
        Ok((act, DiscCache { inputs, pre }))
    }

    pub fn backward(&self, cache: &DiscCache<T>, grad_out: &Tensor<T>) -> Result<DiscriminatorGrads<T>> {
        let slope = T::of(LEAKY_SLOPE);
        let n = self.normalized.len();
        let mut params = vec![Vec::new(); 2 * n];
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            if i < n - 1 {
                g = g.zip_map(&cache.pre[i], |gv, z| if z > T::zero() { gv } else { gv * slope })?;
            }
            let cg = self.normalized[i].backward(&cache.inputs[i], &g)?;
            let gw = spectral_norm_backward(cg.weight.data(), self.normalized[i].weight.data(), &self.states[i], self.sigmas[i]);
            if gw.iter().chain(&cg.bias).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for disc{i}")));
            }
            params[2 * i] = gw;
            params[2 * i + 1] = cg.bias;
            g = cg.input;
        }
        Ok(DiscriminatorGrads { input: g, params })
    }
}

impl<T: Scalar> Parameterized<T> for Discriminator<T> {
    fn params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(ParamRef { name: format!("disc{i}.weight"), shape: l.weight.shape(), data: l.weight.data() });
            out.push(ParamRef { name: format!("disc{i}.bias"), shape: [1, 1, 1, l.bias.len()], data: &l.bias });
        }
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let shape = l.weight.shape();
            let blen = l.bias.len();
            out.push(ParamMut { name: format!("disc{i}.weight"), shape, data: l.weight.data_mut() });
            out.push(ParamMut { name: format!("disc{i}.bias"), shape: [1, 1, 1, blen], data: &mut l.bias });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DiscriminatorConfig {
        DiscriminatorConfig { channels: vec![4, 6], kernel: 3, ..Default::default() }
    }

    #[test]
    fn output_shape_and_determinism() {
        let mut rng = Rng::new(1);
        let d = Discriminator::<f64>::new(tiny(), &mut rng).unwrap();
        let x = Tensor::from_fn([2, 3, 8, 16], |_, _, _, _| rng.uniform_range(-1.0, 1.0));
        let a = d.forward(&x).unwrap();
        assert_eq!(a.shape(), [2, 1, 2, 4]);
        assert_eq!(a, d.forward(&x).unwrap());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        use crate::gradcheck::{central_difference, relative_error};
        let mut rng = Rng::new(2);
        let d = Discriminator::<f64>::new(tiny(), &mut rng).unwrap();
        let x = Tensor::from_fn([1, 3, 4, 8], |_, _, _, _| rng.uniform_range(-1.0, 1.0));
        let (y, cache) = d.forward_cached(&x).unwrap();
        let r = Tensor::from_fn(y.shape(), |_, _, _, _| rng.standard_normal());
        let g = d.backward(&cache, &r).unwrap();
        let numeric = central_difference(x.data(), 1e-6, |v| {
            let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            d.forward(&xt).unwrap().mul(&r).unwrap().sum()
        });
        assert!(relative_error(g.input.data(), &numeric) < 1e-6);
    }
}

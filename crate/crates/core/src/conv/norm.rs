use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-sample, per-channel normalisation with a learned affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNormLayer<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
}

#[derive(Debug, Clone)]
pub struct InstanceNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct InstanceNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> InstanceNormLayer<T> {
    pub fn new(channels: usize, eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::Param(format!("instance norm epsilon must be positive, got {eps}")));
        }
        Ok(InstanceNormLayer { gamma: vec![T::one(); channels], beta: vec![T::zero(); channels], eps })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, InstanceNormCache<T>)> {
        let [b, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!("instance norm has {} channels, input has {c}", self.channels())));
        }
        if h * w == 0 {
            return Err(Error::Shape("instance norm needs a non-empty plane".into()));
        }
        let count = T::of((h * w) as f64);
        let mut out = x.clone();
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(b * c);
        for n in 0..b {
            for ch in 0..c {
                let plane = x.plane(n, ch);
                let mean = plane.iter().copied().sum::<T>() / count;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
                let istd = T::one() / (var + self.eps).sqrt();
                inv_std.push(istd);
                let (g, be) = (self.gamma[ch], self.beta[ch]);
                for ((o, nv), &v) in out.plane_mut(n, ch).iter_mut().zip(normalized.plane_mut(n, ch).iter_mut()).zip(plane) {
                    let xhat = (v - mean) * istd;
                    *nv = xhat;
                    *o = g * xhat + be;
                }
            }
        }
        out.ensure_finite("instance_norm_forward")?;
        Ok((out, InstanceNormCache { normalized, inv_std }))
    }

    pub fn backward(&self, cache: &InstanceNormCache<T>, grad_out: &Tensor<T>) -> Result<InstanceNormGrads<T>> {
        let [b, c, h, w] = cache.normalized.shape();
        if grad_out.shape() != cache.normalized.shape() {
            return Err(Error::Shape(format!(
                "instance norm grad_out is {:?}, expected {:?}",
                grad_out.shape(),
                cache.normalized.shape()
            )));
        }
        let count = T::of((h * w) as f64);
        let mut gx = Tensor::zeros([b, c, h, w]);
        let mut g_gamma = vec![T::zero(); c];
        let mut g_beta = vec![T::zero(); c];
        for n in 0..b {
            for ch in 0..c {
                let xhat = cache.normalized.plane(n, ch);
                let go = grad_out.plane(n, ch);
                let gamma = self.gamma[ch];
                let istd = cache.inv_std[n * c + ch];
                let mut sum_d = T::zero();
                let mut sum_dx = T::zero();
                for (&g, &xh) in go.iter().zip(xhat) {
                    g_gamma[ch] += g * xh;
                    g_beta[ch] += g;
                    let d = g * gamma;
                    sum_d += d;
                    sum_dx += d * xh;
                }
                let mean_d = sum_d / count;
                let mean_dx = sum_dx / count;
                for ((o, &g), &xh) in gx.plane_mut(n, ch).iter_mut().zip(go).zip(xhat) {
                    *o = istd * (g * gamma - mean_d - xh * mean_dx);
                }
            }
        }
        gx.ensure_finite("instance_norm_backward")?;
        Ok(InstanceNormGrads { input: gx, gamma: g_gamma, beta: g_beta })
    }
}

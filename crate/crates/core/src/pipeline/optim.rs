use crate::error::{Error, Result};
use crate::net::Parameterized;
use crate::tensor::Scalar;

/// Bias-corrected Adam with one moment buffer pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Updates every buffer of `model` in place from `grads`, which must be in
    /// [`Parameterized::params`] order. Nothing is modified if any gradient
    /// is non-finite.
    pub fn update<M: Parameterized<T> + ?Sized>(&mut self, model: &mut M, grads: &[Vec<T>]) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != grads.len() {
            return Err(Error::Size(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.data.len() != g.len() {
                return Err(Error::Size(format!("{}: {} values, gradient has {}", p.name, p.data.len(), g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for {}", p.name)));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (ob1, ob2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step_size = T::of(self.lr / c1);
        let inv_c2 = T::of(1.0 / c2);
        let eps = T::of(self.eps);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, &g), mi), vi) in p.data.iter_mut().zip(&grads[k]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                *w -= step_size * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ParamMut, ParamRef};

    struct Vector(Vec<f64>);

    impl Parameterized<f64> for Vector {
        fn params(&self) -> Vec<ParamRef<'_, f64>> {
            vec![ParamRef { name: "x".into(), shape: [1, 1, 1, self.0.len()], data: &self.0 }]
        }
        fn params_mut(&mut self) -> Vec<ParamMut<'_, f64>> {
            let n = self.0.len();
            vec![ParamMut { name: "x".into(), shape: [1, 1, 1, n], data: &mut self.0 }]
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Vector(vec![1.0, -2.0]);
        let mut opt = Adam::new(0.1);
        opt.update(&mut p, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Vector(vec![0.0, 0.0, 0.0]);
        let mut opt = Adam::new(0.01);
        opt.update(&mut p, &[vec![3.0, -0.2, 1e-3]]).unwrap();
        for (x, s) in p.0.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * 0.01).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn quadratic_converges_like_reference() {
        let mut p = Vector(vec![1.0]);
        let mut opt = Adam::new(0.1);
        // scalar reference written out directly
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * p.0[0];
            opt.update(&mut p, &[vec![g]]).unwrap();
            let gr = 2.0 * x;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((x - p.0[0]).abs() < 1e-9);
        }
        assert!(p.0[0].abs() < 1e-3, "{}", p.0[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Vector(vec![1.0]);
        let err = Adam::new(0.1).update(&mut p, &[vec![f64::NAN]]).unwrap_err();
        assert!(matches!(&err, Error::Numeric(m) if m.contains('x')));
        assert_eq!(p.0, vec![1.0]);
    }
}

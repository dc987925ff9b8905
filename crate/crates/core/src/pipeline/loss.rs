use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean absolute error over the pixels selected by `region` (all pixels when
/// `None`), with its gradient with respect to `pred`. The region is a
/// `[N or 1, 1, H, W]` 0/1 mask broadcast over channels.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, region: Option<&Tensor<T>>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("l1: {:?} vs {:?}", pred.shape(), target.shape())));
    }
    let [n, c, h, w] = pred.shape();
    if let Some(r) = region {
        let [rn, rc, rh, rw] = r.shape();
        if rc != 1 || (rn != 1 && rn != n) || (rh, rw) != (h, w) {
            return Err(Error::Shape(format!("l1 region {:?} for prediction {:?}", r.shape(), pred.shape())));
        }
    }
    let weight = |i: usize, k: usize| -> T {
        match region {
            None => T::one(),
            Some(r) => r.plane(if r.batch() == 1 { 0 } else { i }, 0)[k],
        }
    };
    let mut count = 0.0;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for i in 0..n {
        for ch in 0..c {
            let (p, t) = (pred.plane(i, ch), target.plane(i, ch));
            let g = grad.plane_mut(i, ch);
            for k in 0..h * w {
                let wk = weight(i, k);
                if wk == T::zero() {
                    continue;
                }
                count += wk.f64();
                let d = p[k] - t[k];
                total += (wk * d.abs()).f64();
                g[k] = if d > T::zero() {
                    wk
                } else if d < T::zero() {
                    -wk
                } else {
                    T::zero()
                };
            }
        }
    }
    if count == 0.0 {
        return Err(Error::Param("l1: the selected region is empty".into()));
    }
    let inv = T::of(1.0 / count);
    grad.data_mut().iter_mut().for_each(|g| *g *= inv);
    Ok((total / count, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvLoss {
    #[default]
    Wgan,
    Hinge,
}

impl fmt::Display for AdvLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdvLoss::Wgan => "wgan",
            AdvLoss::Hinge => "hinge",
        })
    }
}

impl FromStr for AdvLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wgan" | "wasserstein" => Ok(AdvLoss::Wgan),
            "hinge" => Ok(AdvLoss::Hinge),
            _ => Err(Error::Config(format!("unknown adversarial loss '{s}' (wgan, hinge)"))),
        }
    }
}

/// Critic and generator objectives with their score gradients.
#[derive(Debug, Clone)]
pub struct AdvTerms<T> {
    pub loss_disc: f64,
    pub loss_gen: f64,
    /// `d loss_disc / d real`.
    pub grad_real: Tensor<T>,
    /// `d loss_disc / d fake`.
    pub grad_fake_disc: Tensor<T>,
    /// `d loss_gen / d fake`.
    pub grad_fake_gen: Tensor<T>,
}

/// `loss_disc = mean(fake) - mean(real)`, `loss_gen = -mean(fake)`.
pub fn wgan_losses<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<(f64, f64)> {
    let t = adversarial_terms(AdvLoss::Wgan, real, fake)?;
    Ok((t.loss_disc, t.loss_gen))
}

pub fn adversarial_terms<T: Scalar>(kind: AdvLoss, real: &Tensor<T>, fake: &Tensor<T>) -> Result<AdvTerms<T>> {
    if real.shape() != fake.shape() || real.is_empty() {
        return Err(Error::Shape(format!("adversarial scores {:?} vs {:?}", real.shape(), fake.shape())));
    }
    let n = real.len() as f64;
    let inv = T::of(1.0 / n);
    let mean = |t: &Tensor<T>| t.data().iter().map(|v| v.f64()).sum::<f64>() / n;
    let loss_gen = -mean(fake);
    let grad_fake_gen = Tensor::full(fake.shape(), -inv);
    let (loss_disc, grad_real, grad_fake_disc) = match kind {
        AdvLoss::Wgan => (
            mean(fake) - mean(real),
            Tensor::full(real.shape(), -inv),
            Tensor::full(fake.shape(), inv),
        ),
        AdvLoss::Hinge => {
            let one = T::one();
            let lr: f64 = real.data().iter().map(|&v| (one - v).max(T::zero()).f64()).sum::<f64>() / n;
            let lf: f64 = fake.data().iter().map(|&v| (one + v).max(T::zero()).f64()).sum::<f64>() / n;
            (
                lr + lf,
                real.map(|v| if v < one { -inv } else { T::zero() }),
                fake.map(|v| if v > -one { inv } else { T::zero() }),
            )
        }
    };
    Ok(AdvTerms { loss_disc, loss_gen, grad_real, grad_fake_disc, grad_fake_gen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn l1_examples() {
        let mut rng = Rng::new(1);
        let a: Tensor<f64> = rng.normal([2, 3, 4, 5], 0.0, 1.0).unwrap();
        assert_eq!(l1_loss(&a, &a, None).unwrap().0, 0.0);
        assert!(l1_loss(&a, &a, None).unwrap().1.data().iter().all(|&g| g == 0.0));
        let (l, _) = l1_loss(&a.map(|v| v + 0.5), &a, None).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn l1_matches_reference_loop() {
        let mut rng = Rng::new(2);
        let a: Tensor<f32> = rng.normal([2, 3, 4, 6], 0.0, 1.0).unwrap();
        let b: Tensor<f32> = rng.normal([2, 3, 4, 6], 0.0, 1.0).unwrap();
        let region = Tensor::from_fn([1, 1, 4, 6], |_, _, y, x| if (x + y) % 3 == 0 { 1.0f32 } else { 0.0 });
        let (l, _) = l1_loss(&a, &b, Some(&region)).unwrap();
        let (mut s, mut n) = (0.0f64, 0.0f64);
        for i in 0..2 {
            for c in 0..3 {
                for y in 0..4 {
                    for x in 0..6 {
                        if (x + y) % 3 == 0 {
                            s += (a.at(i, c, y, x) as f64 - b.at(i, c, y, x) as f64).abs();
                            n += 1.0;
                        }
                    }
                }
            }
        }
        assert!((l - s / n).abs() < 1e-7);
    }

    #[test]
    fn l1_empty_region() {
        let a = Tensor::<f64>::zeros([1, 1, 2, 2]);
        assert!(matches!(l1_loss(&a, &a, Some(&a)), Err(Error::Param(_))));
    }

    #[test]
    fn wgan_examples() {
        assert_eq!(wgan_losses(&t(&[1.0, 2.0]), &t(&[1.0, 2.0])).unwrap().0, 0.0);
        assert_eq!(wgan_losses(&t(&[1.0, 2.0]), &t(&[0.0, 0.0])).unwrap().1, 0.0);
        assert_eq!(wgan_losses(&t(&[1.0, 3.0]), &t(&[0.0, 2.0])).unwrap(), (-1.0, -1.0));
    }

    #[test]
    fn hinge_values_and_gradients() {
        let real = t(&[2.0, 0.5]);
        let fake = t(&[-2.0, 0.0]);
        let a = adversarial_terms(AdvLoss::Hinge, &real, &fake).unwrap();
        assert!((a.loss_disc - (0.25 + 0.5)).abs() < 1e-12);
        assert_eq!(a.grad_real.data(), &[0.0, -0.5]);
        assert_eq!(a.grad_fake_disc.data(), &[0.0, 0.5]);
    }
}

//! Portable seeded random numbers: xoshiro256** with a splitmix64 seeder.
//!
//! The stream is fixed by the algorithm alone, so a seed reproduces the same
//! weights and batches on every platform.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm)];
        Rng { s, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; the bias is below 2^-64 * n.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Box–Muller, both outputs used).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Tensor of Gaussian draws.
    pub fn normal<T: Scalar>(&mut self, shape: [usize; 4], mean: f64, std: f64) -> Result<Tensor<T>> {
        if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::Param(format!("normal: need finite mean and std >= 0, got ({mean}, {std})")));
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(mean + std * self.standard_normal())).collect();
        Tensor::from_vec(shape, data)
    }

    pub fn normal_vec<T: Scalar>(&mut self, n: usize, std: f64) -> Vec<T> {
        (0..n).map(|_| T::of(std * self.standard_normal())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_constant() {
        let t: Tensor<f32> = Rng::new(3).normal([1, 2, 3, 4], 0.25, 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn negative_std_rejected() {
        assert!(matches!(Rng::new(1).normal::<f32>([1, 1, 1, 1], 0.0, -1.0), Err(Error::Param(_))));
    }

    #[test]
    fn same_seed_same_tensor() {
        let a: Tensor<f32> = Rng::new(9).normal([1, 1, 4, 4], 0.0, 1.0).unwrap();
        let b: Tensor<f32> = Rng::new(9).normal([1, 1, 4, 4], 0.0, 1.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn distinct_seeds_diverge_early() {
        for s in 0..100u64 {
            let mut a = Rng::new(2 * s);
            let mut b = Rng::new(2 * s + 1);
            let a16: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
            let b16: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
            assert!(a16.iter().zip(&b16).any(|(x, y)| x != y));
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Rng::new(5);
        for n in 1..50 {
            assert!(r.below(n) < n);
        }
    }
}

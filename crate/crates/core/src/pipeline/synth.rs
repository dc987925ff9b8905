//! Procedural panoramas that are exactly periodic in azimuth.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    /// Tilted sinusoidal stripes with an integer number of azimuthal periods.
    #[default]
    Stripes,
    /// Random low-frequency cyclic Fourier texture.
    Fourier,
    /// Horizon gradient with a few wrapped Gaussian blobs.
    Blobs,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Stripes, Family::Fourier, Family::Blobs];

    pub fn name(self) -> &'static str {
        match self {
            Family::Stripes => "stripes",
            Family::Fourier => "fourier",
            Family::Blobs => "blobs",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown synthetic family '{s}' (stripes, fourier, blobs)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub family: Family,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    color: [f64; 3],
}

#[derive(Debug, Clone)]
enum Pattern {
    Waves { offset: [f64; 3], waves: [Vec<Wave>; 3] },
    Blobs { sky: [f64; 3], ground: [f64; 3], horizon: f64, blobs: Vec<Blob> },
}

/// A sampled panorama generator. [`Synth::eval`] is defined at real
/// coordinates, so `eval(c, y, 0) == eval(c, y, W)` can be checked directly.
#[derive(Debug, Clone)]
pub struct Synth {
    pub spec: SynthSpec,
    pattern: Pattern,
}

impl Synth {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        if spec.height == 0 || spec.width == 0 {
            return Err(Error::Param(format!("panorama size {}x{} must be positive", spec.height, spec.width)));
        }
        let mut rng = Rng::new(spec.seed ^ 0x5eed_0000 ^ ((spec.family as u64) << 40));
        let pattern = match spec.family {
            Family::Stripes => {
                let k = 1 + rng.below(3);
                stripes(&mut rng, k)
            }
            Family::Fourier => fourier(&mut rng),
            Family::Blobs => blobs(&mut rng),
        };
        Ok(Synth { spec, pattern })
    }

    /// Stripes with a fixed number of azimuthal periods.
    pub fn stripes_with_frequency(seed: u64, frequency: usize, height: usize, width: usize) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::Param("stripe frequency must be positive".into()));
        }
        let spec = SynthSpec { family: Family::Stripes, seed, height, width };
        let mut rng = Rng::new(seed ^ 0x5eed_0000);
        Ok(Synth { spec, pattern: stripes(&mut rng, frequency) })
    }

    /// Channel `c` at polar row `y` and azimuthal column `x`, both real.
    pub fn eval(&self, c: usize, y: f64, x: f64) -> f64 {
        let u = x / self.spec.width as f64;
        let v = y / self.spec.height as f64;
        let raw = match &self.pattern {
            Pattern::Waves { offset, waves } => {
                offset[c] + waves[c].iter().map(|w| w.amp * (TAU * w.kx * u + PI * w.ky * v + w.phase).sin()).sum::<f64>()
            }
            Pattern::Blobs { sky, ground, horizon, blobs } => {
                let t = 0.5 * (1.0 + ((v - horizon) * 8.0).tanh());
                let mut val = sky[c] * (1.0 - t) + ground[c] * t;
                for b in blobs {
                    let d = (u - b.cx).rem_euclid(1.0);
                    let dx = d.min(1.0 - d) * 2.0;
                    let dy = v - b.cy;
                    let g = (-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius)).exp();
                    val += g * (b.color[c] - val);
                }
                val
            }
        };
        raw.clamp(-1.0, 1.0)
    }

    /// `[1, 3, H, W]` image sampled at integer coordinates.
    pub fn render<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn([1, 3, self.spec.height, self.spec.width], |_, c, y, x| T::of(self.eval(c, y as f64, x as f64)))
    }
}

fn stripes(rng: &mut Rng, k: usize) -> Pattern {
    let tilt = rng.uniform_range(-2.0, 2.0);
    let phase = rng.uniform_range(0.0, TAU);
    let mut offset = [0.0; 3];
    let waves = std::array::from_fn(|c| {
        let amp = rng.uniform_range(0.3, 0.8);
        offset[c] = rng.uniform_range(-(0.9 - amp), 0.9 - amp);
        vec![Wave { amp, kx: k as f64, ky: tilt, phase: phase + rng.uniform_range(-0.5, 0.5) }]
    });
    Pattern::Waves { offset, waves }
}

fn fourier(rng: &mut Rng) -> Pattern {
    let waves: [Vec<Wave>; 3] = std::array::from_fn(|_| {
        let mut ws = Vec::new();
        for kx in 0..=3 {
            for ky in 0..=2 {
                let amp = rng.standard_normal() / (1.0 + (kx + ky) as f64);
                ws.push(Wave { amp, kx: kx as f64, ky: ky as f64, phase: rng.uniform_range(0.0, TAU) });
            }
        }
        let total: f64 = ws.iter().map(|w| w.amp.abs()).sum();
        ws.iter_mut().for_each(|w| w.amp *= 0.9 / total);
        ws
    });
    Pattern::Waves { offset: [0.0; 3], waves }
}

fn blobs(rng: &mut Rng) -> Pattern {
    let mut color = || std::array::from_fn(|_| rng.uniform_range(-0.9, 0.9));
    let sky = color();
    let ground = color();
    let horizon = rng.uniform_range(0.35, 0.65);
    let n = 2 + rng.below(3);
    let blobs = (0..n)
        .map(|_| Blob {
            cx: rng.uniform(),
            cy: rng.uniform_range(0.2, 0.8),
            radius: rng.uniform_range(0.05, 0.2),
            color: std::array::from_fn(|_| rng.uniform_range(-0.9, 0.9)),
        })
        .collect();
    Pattern::Blobs { sky, ground, horizon, blobs }
}

pub fn synth_panorama<T: Scalar>(spec: SynthSpec) -> Result<Tensor<T>> {
    Ok(Synth::new(spec)?.render())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_continuity_all_families() {
        for fam in Family::ALL {
            for seed in 0..10 {
                let s = Synth::new(SynthSpec { family: fam, seed, height: 16, width: 48 }).unwrap();
                for c in 0..3 {
                    for y in 0..16 {
                        let y = y as f64 + 0.25;
                        assert!((s.eval(c, y, 0.0) - s.eval(c, y, 48.0)).abs() < 1e-6, "{fam}");
                    }
                }
            }
        }
    }

    #[test]
    fn stripe_frequency_two_wraps() {
        let s = Synth::stripes_with_frequency(3, 2, 8, 32).unwrap();
        for y in 0..8 {
            assert!((s.eval(0, y as f64, 0.0) - s.eval(0, y as f64, 32.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let spec = SynthSpec { family: Family::Blobs, seed: 7, height: 16, width: 32 };
        let a: Tensor<f32> = synth_panorama(spec).unwrap();
        let b: Tensor<f32> = synth_panorama(spec).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn family_names_parse() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!(matches!("plaid".parse::<Family>(), Err(Error::Config(_))));
    }
}

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const PSNR_CAP: f64 = 99.0;

/// `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP`] for MSE below 1e-12.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(Error::Shape(format!("psnr: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x.f64() - y.f64()).powi(2)).sum::<f64>() / a.len() as f64;
    if mse < 1e-12 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Normalised 1D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Window used for an `h x w` image: 11 taps, shrunk to the largest odd
/// size that fits.
pub fn ssim_window_size(h: usize, w: usize) -> usize {
    let m = h.min(w).min(11);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Valid-mode separable filtering of one plane.
fn filter(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range 2,
/// averaged over channels and batch items.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(Error::Shape(format!("ssim: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let [n, c, h, w] = a.shape();
    let taps = gaussian_window(ssim_window_size(h, w), 1.5);
    let (c1, c2) = ((0.01f64 * 2.0).powi(2), (0.03f64 * 2.0).powi(2));
    let mut total = 0.0;
    for i in 0..n {
        for ch in 0..c {
            let x: Vec<f64> = a.plane(i, ch).iter().map(|v| v.f64()).collect();
            let y: Vec<f64> = b.plane(i, ch).iter().map(|v| v.f64()).collect();
            let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
            let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
            let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, h, w, &taps));
            let mut s = 0.0;
            for k in 0..mx.len() {
                let (ux, uy) = (mx[k], my[k]);
                let vx = sxx[k] - ux * ux;
                let vy = syy[k] - uy * uy;
                let cov = sxy[k] - ux * uy;
                s += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            }
            total += s / mx.len() as f64;
        }
    }
    Ok(total / (n * c) as f64)
}

/// Mean absolute jump across the wrap seam divided by the mean absolute
/// jump between interior neighbouring columns. Close to 1 when the seam
/// looks like any other column boundary; 1 for a constant image.
pub fn seam_metric<T: Scalar>(image: &Tensor<T>) -> Result<f64> {
    let [n, c, h, w] = image.shape();
    if w < 4 {
        return Err(Error::Param(format!("seam metric needs width >= 4, got {w}")));
    }
    let (mut seam, mut interior) = (0.0, 0.0);
    for i in 0..n {
        for ch in 0..c {
            let p = image.plane(i, ch);
            for y in 0..h {
                let row = &p[y * w..(y + 1) * w];
                seam += (row[0].f64() - row[w - 1].f64()).abs();
                interior += row.windows(2).map(|d| (d[1].f64() - d[0].f64()).abs()).sum::<f64>();
            }
        }
    }
    let rows = (n * c * h) as f64;
    let seam = seam / rows;
    let interior = interior / (rows * (w - 1) as f64);
    Ok(if interior == 0.0 {
        if seam == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        seam / interior
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn ssim_reference(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        let [n, c, h, w] = a.shape();
        let k = ssim_window_size(h, w);
        let g = gaussian_window(k, 1.5);
        let (c1, c2) = (0.0004, 0.0036);
        let mut acc = 0.0;
        for i in 0..n {
            for ch in 0..c {
                let mut s = 0.0;
                for y0 in 0..=h - k {
                    for x0 in 0..=w - k {
                        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                        for dy in 0..k {
                            for dx in 0..k {
                                let wt = g[dy] * g[dx];
                                let p = a.at(i, ch, y0 + dy, x0 + dx);
                                let q = b.at(i, ch, y0 + dy, x0 + dx);
                                mx += wt * p;
                                my += wt * q;
                                sxx += wt * p * p;
                                syy += wt * q * q;
                                sxy += wt * p * q;
                            }
                        }
                        let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                        s += ((2.0 * mx * my + c1) * (2.0 * cv + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    }
                }
                acc += s / ((h - k + 1) * (w - k + 1)) as f64;
            }
        }
        acc / (n * c) as f64
    }

    #[test]
    fn identical_images() {
        let mut rng = Rng::new(1);
        let a: Tensor<f64> = rng.normal([1, 3, 16, 20], 0.0, 0.5).unwrap();
        assert_eq!(psnr(&a, &a, 2.0).unwrap(), 99.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psnr_closed_form() {
        let a = Tensor::<f64>::zeros([1, 1, 4, 4]);
        let b = Tensor::full([1, 1, 4, 4], 0.2);
        assert!((psnr(&a, &b, 2.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_reference_and_is_symmetric() {
        let mut rng = Rng::new(2);
        for shape in [[1, 3, 16, 24], [2, 1, 6, 9]] {
            let a: Tensor<f64> = rng.normal(shape, 0.0, 0.5).unwrap();
            let b = a.zip_map(&rng.normal(shape, 0.0, 0.3).unwrap(), |x, y| x + y).unwrap();
            let s = ssim(&a, &b).unwrap();
            assert!((s - ssim_reference(&a, &b)).abs() < 1e-5);
            assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-7);
            assert!((-1.0..=1.0).contains(&s));
            assert_eq!(psnr(&a, &b, 2.0).unwrap(), psnr(&b, &a, 2.0).unwrap());
        }
    }

    #[test]
    fn seam_conventions() {
        let flat = Tensor::from_fn([1, 3, 4, 8], |_, _, y, _| y as f64 * 0.1);
        assert_eq!(seam_metric(&flat).unwrap(), 1.0);
        let ramp = Tensor::from_fn([1, 1, 2, 8], |_, _, _, x| x as f64 * 0.1);
        assert!((seam_metric(&ramp).unwrap() - 7.0).abs() < 1e-9);
        assert!(seam_metric(&Tensor::<f64>::zeros([1, 1, 2, 3])).is_err());
    }
}

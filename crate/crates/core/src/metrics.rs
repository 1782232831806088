//! Image quality metrics.

use crate::data::ImageSlice;
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_dims<T: Scalar>(a: &ImageSlice<T>, b: &ImageSlice<T>) -> Result<()> {
    if a.data.dims() != b.data.dims() {
        return shape_err(format!("image dims differ: {:?} vs {:?}", a.data.dims(), b.data.dims()));
    }
    Ok(())
}

pub fn mse<T: Scalar>(a: &ImageSlice<T>, b: &ImageSlice<T>) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data.data().iter().zip(b.data.data()).map(|(x, y)| (x.f64() - y.f64()).powi(2)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images match.
pub fn psnr<T: Scalar>(a: &ImageSlice<T>, b: &ImageSlice<T>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return arg_err("PSNR peak must be positive");
    }
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / m).log10() })
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of a row-major `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            tmp[i * ow + j] = (0..k).map(|t| g[t] * x[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| g[t] * tmp[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean structural similarity with dynamic range `range`.
pub fn ssim_with_range<T: Scalar>(a: &ImageSlice<T>, b: &ImageSlice<T>, range: f64) -> Result<f64> {
    same_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return shape_err(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    if !(range > 0.0) {
        return arg_err("SSIM dynamic range must be positive");
    }
    let x: Vec<f64> = a.data.data().iter().map(|v| v.f64()).collect();
    let y: Vec<f64> = b.data.data().iter().map(|v| v.f64()).collect();
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, h, w, &g);
    let my = filter_valid(&y, h, w, &g);
    let mxx = filter_valid(&prod(&x, &x), h, w, &g);
    let myy = filter_valid(&prod(&y, &y), h, w, &g);
    let mxy = filter_valid(&prod(&x, &y), h, w, &g);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let (vx, vy, cxy) = (mxx[i] - ux * ux, myy[i] - uy * uy, mxy[i] - ux * uy);
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

pub fn ssim<T: Scalar>(a: &ImageSlice<T>, b: &ImageSlice<T>) -> Result<f64> {
    ssim_with_range(a, b, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(n: usize, f: impl FnMut(usize) -> f64) -> ImageSlice {
        ImageSlice::new(Tensor::from_fn(&[n, n], f), 1.0).unwrap()
    }

    #[test]
    fn psnr_values() {
        let a = img(8, |_| 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let (z, o) = (img(4, |_| 0.0), img(4, |_| 1.0));
        assert!(psnr(&z, &o, 1.0).unwrap().abs() < 1e-12);
        let b = img(8, |_| 0.4);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &img(4, |_| 0.0), 1.0).is_err());
    }

    #[test]
    fn ssim_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = img(32, |_| rng.random());
        let b = img(32, |_| rng.random());
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ssim(&img(10, |_| 0.0), &img(10, |_| 0.0)).is_err());
    }
}

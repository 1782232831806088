//! Parallel-beam CT: forward projection, filtered back-projection, view
//! subsampling and angular interpolation.

pub mod projector;
pub mod sinogram;

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::ImageSlice;
use crate::error::{arg_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use projector::{default_detectors, Projector};
pub use sinogram::{
    crop_sinogram, full_view_angles, interpolate_sinogram, pad_sinogram, read_sinogram, sparse_sample,
    write_sinogram, Sinogram,
};

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.f64()).collect()
}

/// Line integrals of `img` along parallel rays at every angle.
pub fn radon_forward<T: Scalar>(img: &ImageSlice<T>, angles_deg: &[f64], n_detectors: usize) -> Result<Sinogram<T>> {
    let proj = Projector::new(img.height(), img.width(), img.pixel_size, angles_deg, n_detectors, 1.0)?;
    let out = proj.forward(&to_f64(&img.data));
    Sinogram::new(
        Tensor::new(&[angles_deg.len(), n_detectors], out.into_iter().map(T::c).collect())?,
        angles_deg.to_vec(),
        1.0,
    )
}

/// Frequency response of the band-limited ramp (Ram-Lak) kernel for
/// sample spacing `tau`, on an `n`-point circular grid.
fn ramp_response(n: usize, tau: f64) -> Vec<Complex<f64>> {
    let h = |k: usize| {
        if k == 0 {
            1.0 / (4.0 * tau * tau)
        } else if k % 2 == 1 {
            -1.0 / ((k * k) as f64 * PI * PI * tau * tau)
        } else {
            0.0
        }
    };
    let mut ker: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(h(i.min(n - i)), 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut ker);
    ker
}

/// Ramp-filters every projection row (zero-padded linear convolution).
pub fn ramp_filter(rows: &[f64], n_det: usize, tau: f64) -> Vec<f64> {
    let n = (2 * n_det).next_power_of_two();
    let resp = ramp_response(n, tau);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = vec![0.0; rows.len()];
    out.par_chunks_mut(n_det).zip(rows.par_chunks(n_det)).for_each(|(o, r)| {
        let mut buf: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(if i < n_det { r[i] } else { 0.0 }, 0.0)).collect();
        fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&resp) {
            *b *= h;
        }
        inv.process(&mut buf);
        let scale = tau / n as f64;
        for (k, v) in o.iter_mut().enumerate() {
            *v = buf[k].re * scale;
        }
    });
    out
}

/// Filtered back-projection onto an `h x w` grid of the given pixel size.
pub fn fbp_with_pixel<T: Scalar>(sino: &Sinogram<T>, out_size: (usize, usize), pixel_size: f64) -> Result<ImageSlice<T>> {
    if sino.n_angles() < 2 {
        return arg_err("FBP needs at least 2 angles");
    }
    let (h, w) = out_size;
    if h == 0 || w == 0 || !(pixel_size > 0.0) {
        return arg_err("output size and pixel size must be positive");
    }
    let n_det = sino.n_detectors();
    let tau = sino.detector_spacing * pixel_size;
    let q = ramp_filter(&to_f64(&sino.data), n_det, tau);
    let trig: Vec<(f64, f64)> = sino.angles_deg.iter().map(|a| a.to_radians().sin_cos()).collect();
    let weight = PI / sino.n_angles() as f64;
    let (cx, cy, cd) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, (n_det as f64 - 1.0) / 2.0);
    let mut img = vec![0.0; h * w];
    img.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        let y = cy - i as f64;
        for (j, px) in row.iter_mut().enumerate() {
            let x = j as f64 - cx;
            let mut acc = 0.0;
            for (a, &(s, c)) in trig.iter().enumerate() {
                let u = (x * c + y * s) / sino.detector_spacing + cd;
                let u0 = u.floor();
                let f = u - u0;
                let k = u0 as isize;
                let qa = &q[a * n_det..(a + 1) * n_det];
                if k >= 0 && (k as usize) < n_det {
                    acc += (1.0 - f) * qa[k as usize];
                }
                if k + 1 >= 0 && ((k + 1) as usize) < n_det {
                    acc += f * qa[(k + 1) as usize];
                }
            }
            *px = acc * weight;
        }
    });
    ImageSlice::new(Tensor::new(&[h, w], img.into_iter().map(T::c).collect())?, pixel_size)
}

pub fn fbp<T: Scalar>(sino: &Sinogram<T>, out_size: (usize, usize)) -> Result<ImageSlice<T>> {
    fbp_with_pixel(sino, out_size, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> ImageSlice {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageSlice::new(Tensor::from_fn(&[n, n], |_| rng.random::<f64>()), 1.0).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let z = ImageSlice::<f64>::zeros(16, 16);
        let s = radon_forward(&z, &full_view_angles(30), 23).unwrap();
        assert!(s.data.data().iter().all(|&v| v == 0.0));
        assert!(fbp(&s, (16, 16)).unwrap().data.data().iter().all(|&v| v == 0.0));
        assert!(radon_forward(&z, &[], 23).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let angles = full_view_angles(17);
        let p = Projector::new(12, 10, 1.0, &angles, 17, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..120).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..17 * 17).map(|_| rng.random()).collect();
        let lhs: f64 = p.forward(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(p.adjoint(&y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs());
    }

    #[test]
    fn operators_are_linear() {
        let (a, b) = (random_image(16, 1), random_image(16, 2));
        let angles = full_view_angles(20);
        let comb = ImageSlice::new(Tensor::from_fn(&[16, 16], |i| 2.0 * a.data.data()[i] - 0.5 * b.data.data()[i]), 1.0).unwrap();
        let (sa, sb) = (radon_forward(&a, &angles, 23).unwrap(), radon_forward(&b, &angles, 23).unwrap());
        let sc = radon_forward(&comb, &angles, 23).unwrap();
        for i in 0..sc.data.len() {
            let want = 2.0 * sa.data.data()[i] - 0.5 * sb.data.data()[i];
            assert!((sc.data.data()[i] - want).abs() <= 1e-8 * want.abs().max(1.0));
        }
        let fa = fbp(&sa, (16, 16)).unwrap();
        let f3 = fbp(&sa.scaled(3.0), (16, 16)).unwrap();
        for (x, y) in fa.data.data().iter().zip(f3.data.data()) {
            assert!((3.0 * x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn filter_matches_direct_convolution() {
        let n_det = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let row: Vec<f64> = (0..n_det).map(|_| rng.random()).collect();
        let got = ramp_filter(&row, n_det, 1.0);
        for k in 0..n_det {
            let mut want = 0.0;
            for (m, &v) in row.iter().enumerate() {
                let d = k.abs_diff(m);
                let h = if d == 0 { 0.25 } else if d % 2 == 1 { -1.0 / (PI * PI * (d * d) as f64) } else { 0.0 };
                want += h * v;
            }
            assert!((got[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fbp_rejects_single_view() {
        let s = Sinogram::new(Tensor::<f64>::zeros(&[1, 5]), vec![0.0], 1.0).unwrap();
        assert!(fbp(&s, (4, 4)).is_err());
    }
}

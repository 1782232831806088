//! Ellipse phantoms.

use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A 2D image of attenuation values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSlice<T: Scalar = f64> {
    pub data: Tensor<T>,
    pub pixel_size: f64,
}

impl<T: Scalar> ImageSlice<T> {
    pub fn new(data: Tensor<T>, pixel_size: f64) -> Result<Self> {
        if data.ndim() != 2 {
            return shape_err(format!("image slices are 2-d, got {:?}", data.dims()));
        }
        data.check_finite("image slice")?;
        if !(pixel_size > 0.0) {
            return arg_err("pixel size must be positive");
        }
        Ok(Self { data, pixel_size })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { data: Tensor::zeros(&[h, w]), pixel_size: 1.0 }
    }

    pub fn height(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data.data()[i * self.width() + j]
    }

    pub fn clipped(&self, lo: T, hi: T) -> Self {
        Self { data: self.data.map(|v| v.max(lo).min(hi)), pixel_size: self.pixel_size }
    }
}

/// Ellipse in normalised coordinates: the image spans `[-1, 1]` on both axes
/// with `y` pointing up; `theta_deg` rotates the semi-axes counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta_deg: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// The ten ellipses of the modified (high-contrast) Shepp-Logan head phantom.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse { cx: 0.0, cy: 0.0, a: 0.69, b: 0.92, theta_deg: 0.0, intensity: 1.0 },
    Ellipse { cx: 0.0, cy: -0.0184, a: 0.6624, b: 0.874, theta_deg: 0.0, intensity: -0.8 },
    Ellipse { cx: 0.22, cy: 0.0, a: 0.11, b: 0.31, theta_deg: -18.0, intensity: -0.2 },
    Ellipse { cx: -0.22, cy: 0.0, a: 0.16, b: 0.41, theta_deg: 18.0, intensity: -0.2 },
    Ellipse { cx: 0.0, cy: 0.35, a: 0.21, b: 0.25, theta_deg: 0.0, intensity: 0.1 },
    Ellipse { cx: 0.0, cy: 0.1, a: 0.046, b: 0.046, theta_deg: 0.0, intensity: 0.1 },
    Ellipse { cx: 0.0, cy: -0.1, a: 0.046, b: 0.046, theta_deg: 0.0, intensity: 0.1 },
    Ellipse { cx: -0.08, cy: -0.605, a: 0.046, b: 0.023, theta_deg: 0.0, intensity: 0.1 },
    Ellipse { cx: 0.0, cy: -0.606, a: 0.023, b: 0.023, theta_deg: 0.0, intensity: 0.1 },
    Ellipse { cx: 0.06, cy: -0.605, a: 0.023, b: 0.046, theta_deg: 0.0, intensity: 0.1 },
];

/// Normalised coordinates of the centre of pixel `(i, j)`.
pub fn pixel_center(i: usize, j: usize, size: usize) -> (f64, f64) {
    let n = size as f64;
    ((2.0 * j as f64 + 1.0) / n - 1.0, 1.0 - (2.0 * i as f64 + 1.0) / n)
}

/// Point-samples the summed ellipse intensities at every pixel centre.
pub fn rasterize<T: Scalar>(ellipses: &[Ellipse], size: usize) -> Tensor<T> {
    Tensor::from_fn(&[size, size], |k| {
        let (x, y) = pixel_center(k / size, k % size, size);
        T::c(ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum::<f64>())
    })
}

/// Shepp-Logan phantom on a `size x size` grid, scaled into `[0, 1]`.
pub fn shepp_logan<T: Scalar>(size: usize) -> Result<ImageSlice<T>> {
    if size < 16 {
        return arg_err(format!("phantom size must be >= 16, got {size}"));
    }
    let raw = rasterize::<f64>(&SHEPP_LOGAN, size);
    let peak = raw.data().iter().fold(0.0f64, |m, &v| m.max(v));
    let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let data = raw.map(|v| (v * scale).clamp(0.0, 1.0)).cast();
    ImageSlice::new(data, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_range() {
        let p = shepp_logan::<f64>(128).unwrap();
        assert_eq!(p.data.dims(), &[128, 128]);
        assert!(p.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(p.data.max_abs() > 0.99);
    }

    #[test]
    fn minimal_size_is_valid() {
        let p = shepp_logan::<f32>(16).unwrap();
        assert!(p.data.data().iter().all(|v| v.is_finite()));
        assert!(shepp_logan::<f64>(15).is_err());
    }

    #[test]
    fn center_pixel_matches_analytic_membership() {
        let size = 127;
        let p = shepp_logan::<f64>(size).unwrap();
        let c = size / 2;
        assert_eq!(pixel_center(c, c, size), (0.0, 0.0));
        // Independent membership test at the origin: ((x-cx)^2 rotated) / axes.
        let mut expect = 0.0;
        for e in SHEPP_LOGAN.iter() {
            let t = e.theta_deg.to_radians();
            let (x, y) = (-e.cx, -e.cy);
            let u = x * t.cos() + y * t.sin();
            let v = y * t.cos() - x * t.sin();
            if u * u / (e.a * e.a) + v * v / (e.b * e.b) <= 1.0 {
                expect += e.intensity;
            }
        }
        assert!((p.get(c, c) - expect).abs() < 1e-12, "{} vs {expect}", p.get(c, c));
        assert!((expect - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric_away_from_the_asymmetric_ellipses() {
        let size = 128;
        let p = shepp_logan::<f64>(size).unwrap();
        // Ellipses 3, 4, 8 and 10 have no mirror partner.
        let asym: Vec<&Ellipse> = [2, 3, 7, 9].iter().map(|&k| &SHEPP_LOGAN[k]).collect();
        let near = |x: f64, y: f64| {
            asym.iter().any(|e| {
                let r = e.a.max(e.b) + 4.0 / size as f64;
                ((x - e.cx).abs() < r && (y - e.cy).abs() < r) || ((-x - e.cx).abs() < r && (y - e.cy).abs() < r)
            })
        };
        let mut checked = 0;
        for i in 0..size {
            for j in 0..size {
                let (x, y) = pixel_center(i, j, size);
                if near(x, y) {
                    continue;
                }
                assert!((p.get(i, j) - p.get(i, size - 1 - j)).abs() < 1e-6, "({i}, {j})");
                checked += 1;
            }
        }
        assert!(checked > size * size / 2);
    }
}

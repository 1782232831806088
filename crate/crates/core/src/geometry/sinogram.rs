//! Sinograms, view subsampling, angular interpolation and file I/O.

use std::path::{Path, PathBuf};

use crate::data::tns::{read_tensor, write_tensor};
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T: Scalar = f64> {
    /// `[angles, detectors]`.
    pub data: Tensor<T>,
    pub angles_deg: Vec<f64>,
    /// Detector pitch in pixel units.
    pub detector_spacing: f64,
}

/// Evenly spaced angles `0, 180/n, ...` below 180 degrees.
pub fn full_view_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * 180.0 / n as f64).collect()
}

impl<T: Scalar> Sinogram<T> {
    pub fn new(data: Tensor<T>, angles_deg: Vec<f64>, detector_spacing: f64) -> Result<Self> {
        if data.ndim() != 2 {
            return shape_err(format!("sinograms are [angles, detectors], got {:?}", data.dims()));
        }
        if data.dims()[0] != angles_deg.len() {
            return shape_err(format!("{} rows but {} angles", data.dims()[0], angles_deg.len()));
        }
        if angles_deg.iter().any(|a| !(0.0..180.0).contains(a)) {
            return arg_err("angles must lie in [0, 180)");
        }
        if angles_deg.windows(2).any(|p| p[1] <= p[0]) {
            return arg_err("angles must be strictly increasing");
        }
        if !(detector_spacing > 0.0) {
            return arg_err("detector spacing must be positive");
        }
        data.check_finite("sinogram")?;
        Ok(Self { data, angles_deg, detector_spacing })
    }

    pub fn n_angles(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn n_detectors(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn row(&self, a: usize) -> &[T] {
        let d = self.n_detectors();
        &self.data.data()[a * d..(a + 1) * d]
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { data: self.data.map(|v| v * c), ..self.clone() }
    }

    pub fn cast<U: Scalar>(&self) -> Sinogram<U> {
        Sinogram { data: self.data.cast(), angles_deg: self.angles_deg.clone(), detector_spacing: self.detector_spacing }
    }
}

/// Keeps rows `0, interval, 2 * interval, ...`.
pub fn sparse_sample<T: Scalar>(sino: &Sinogram<T>, interval: usize) -> Result<Sinogram<T>> {
    if interval == 0 {
        return arg_err("sampling interval must be >= 1");
    }
    if interval > sino.n_angles() {
        return arg_err(format!("interval {interval} exceeds the {} available angles", sino.n_angles()));
    }
    let keep: Vec<usize> = (0..sino.n_angles()).step_by(interval).collect();
    let mut data = Vec::with_capacity(keep.len() * sino.n_detectors());
    for &a in &keep {
        data.extend_from_slice(sino.row(a));
    }
    Sinogram::new(
        Tensor::new(&[keep.len(), sino.n_detectors()], data)?,
        keep.iter().map(|&a| sino.angles_deg[a]).collect(),
        sino.detector_spacing,
    )
}

/// Row of `sino` at an arbitrary angle, using linear interpolation between
/// neighbouring views and `p(theta + 180, s) = p(theta, -s)` beyond the ends.
fn row_at<T: Scalar>(sino: &Sinogram<T>, theta: f64, out: &mut [T]) {
    let n = sino.n_angles();
    let wraps = (theta / 180.0).floor();
    let theta = theta - 180.0 * wraps;
    let flip_out = (wraps as i64).rem_euclid(2) == 1;
    let ang = &sino.angles_deg;
    let d = sino.n_detectors();
    let fetch = |a: usize, flip: bool, k: usize| sino.row(a)[if flip { d - 1 - k } else { k }];
    // Bracket theta between (lo, flip_lo) and (hi, flip_hi).
    let (lo, lo_ang, flip_lo, hi, hi_ang, flip_hi) = match ang.iter().position(|&a| a >= theta) {
        Some(j) if ang[j] == theta => (j, theta, false, j, theta, false),
        Some(0) => (n - 1, ang[n - 1] - 180.0, true, 0, ang[0], false),
        Some(j) => (j - 1, ang[j - 1], false, j, ang[j], false),
        None => (n - 1, ang[n - 1], false, 0, ang[0] + 180.0, true),
    };
    let w = if hi_ang > lo_ang { (theta - lo_ang) / (hi_ang - lo_ang) } else { 0.0 };
    let wt = T::c(w);
    for (k, o) in out.iter_mut().enumerate() {
        let kk = if flip_out { d - 1 - k } else { k };
        let a = fetch(lo, flip_lo, kk);
        *o = if w == 0.0 { a } else { a + wt * (fetch(hi, flip_hi, kk) - a) };
    }
}

/// Per-detector linear interpolation along the angle axis onto `target_angles`.
pub fn interpolate_sinogram<T: Scalar>(sparse: &Sinogram<T>, target_angles: &[f64]) -> Result<Sinogram<T>> {
    if sparse.n_angles() < 2 {
        return arg_err("interpolation needs at least 2 source angles");
    }
    if target_angles.is_empty() {
        return arg_err("target angle list is empty");
    }
    let d = sparse.n_detectors();
    let mut data = vec![T::zero(); target_angles.len() * d];
    for (row, &theta) in data.chunks_mut(d).zip(target_angles) {
        row_at(sparse, theta, row);
    }
    Sinogram::new(Tensor::new(&[target_angles.len(), d], data)?, target_angles.to_vec(), sparse.detector_spacing)
}

/// Pads a sinogram to `[rows, cols]` for network input. Extra rows continue
/// the angular period past 180 degrees (with the detector flip); extra
/// detectors are zero and split evenly on both sides.
pub fn pad_sinogram<T: Scalar>(sino: &Sinogram<T>, rows: usize, cols: usize) -> Result<Tensor<T>> {
    let (a, d) = (sino.n_angles(), sino.n_detectors());
    if rows < a || cols < d {
        return shape_err(format!("cannot pad [{a}, {d}] into [{rows}, {cols}]"));
    }
    let step = if a >= 2 { sino.angles_deg[a - 1] - sino.angles_deg[a - 2] } else { 180.0 };
    let left = (cols - d) / 2;
    let mut out = vec![T::zero(); rows * cols];
    let mut buf = vec![T::zero(); d];
    for r in 0..rows {
        let src: &[T] = if r < a {
            sino.row(r)
        } else {
            row_at(sino, sino.angles_deg[a - 1] + step * (r + 1 - a) as f64, &mut buf);
            &buf
        };
        out[r * cols + left..r * cols + left + d].copy_from_slice(src);
    }
    Tensor::new(&[rows, cols], out)
}

/// Inverse of [`pad_sinogram`]: crops back to the sinogram's own rows and detectors.
pub fn crop_sinogram<T: Scalar>(padded: &Tensor<T>, like: &Sinogram<T>) -> Result<Sinogram<T>> {
    let (a, d) = (like.n_angles(), like.n_detectors());
    let &[rows, cols] = padded.dims() else {
        return shape_err(format!("expected a 2-d tensor, got {:?}", padded.dims()));
    };
    if rows < a || cols < d {
        return shape_err(format!("cannot crop [{rows}, {cols}] to [{a}, {d}]"));
    }
    let left = (cols - d) / 2;
    let mut data = Vec::with_capacity(a * d);
    for r in 0..a {
        data.extend_from_slice(&padded.data()[r * cols + left..r * cols + left + d]);
    }
    Sinogram::new(Tensor::new(&[a, d], data)?, like.angles_deg.clone(), like.detector_spacing)
}

/// Sidecar path holding the angle list followed by the detector spacing.
pub fn angles_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".angles.tns");
    PathBuf::from(s)
}

pub fn write_sinogram<T: Scalar>(path: impl AsRef<Path>, sino: &Sinogram<T>) -> Result<()> {
    let path = path.as_ref();
    write_tensor(path, &sino.data)?;
    let mut meta = sino.angles_deg.clone();
    meta.push(sino.detector_spacing);
    write_tensor(angles_path(path), &Tensor::new(&[meta.len()], meta)?)
}

/// Reads a sinogram; without a sidecar the rows are taken as evenly spaced
/// over 180 degrees with unit detector spacing.
pub fn read_sinogram<T: Scalar>(path: impl AsRef<Path>) -> Result<Sinogram<T>> {
    let path = path.as_ref();
    let data = read_tensor::<T>(path)?;
    if data.ndim() != 2 {
        return shape_err(format!("{}: sinograms are 2-d, got {:?}", path.display(), data.dims()));
    }
    let side = angles_path(path);
    let (angles, spacing) = if side.exists() {
        let mut meta = read_tensor::<f64>(&side)?.into_data();
        let spacing = meta.pop().unwrap_or(1.0);
        (meta, spacing)
    } else {
        (full_view_angles(data.dims()[0]), 1.0)
    };
    Sinogram::new(data, angles, spacing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sino(rows: usize, d: usize, f: impl Fn(f64, usize) -> f64) -> Sinogram {
        let angles = full_view_angles(rows);
        let data = Tensor::from_fn(&[rows, d], |i| f(angles[i / d], i % d));
        Sinogram::new(data, angles, 1.0).unwrap()
    }

    #[test]
    fn validates_angles() {
        let t = Tensor::<f64>::zeros(&[2, 3]);
        assert!(Sinogram::new(t.clone(), vec![0.0, 0.0], 1.0).is_err());
        assert!(Sinogram::new(t.clone(), vec![0.0, 180.0], 1.0).is_err());
        assert!(Sinogram::new(t.clone(), vec![0.0], 1.0).is_err());
        assert!(Sinogram::new(t, vec![0.0, 90.0], 1.0).is_ok());
    }

    #[test]
    fn sampling_counts() {
        let s = sino(180, 4, |a, k| a + k as f64);
        assert_eq!(sparse_sample(&s, 1).unwrap(), s);
        let q = sparse_sample(&s, 4).unwrap();
        assert_eq!(q.n_angles(), 45);
        let q = sparse_sample(&s, 16).unwrap();
        assert_eq!(q.n_angles(), 12);
        assert_eq!(q.angles_deg, (0..12).map(|k| 16.0 * k as f64).collect::<Vec<_>>());
        assert_eq!(q.row(11), s.row(176));
        assert!(sparse_sample(&s, 0).is_err());
        assert!(sparse_sample(&s, 181).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_affine_rows() {
        let s = sino(180, 5, |a, k| 2.0 * a - 3.0 * k as f64 + 1.0);
        let sparse = sparse_sample(&s, 4).unwrap();
        let targets: Vec<f64> = (0..=176).map(|a| a as f64).collect();
        let full = interpolate_sinogram(&sparse, &targets).unwrap();
        for (r, &a) in targets.iter().enumerate() {
            for k in 0..5 {
                let want = 2.0 * a - 3.0 * k as f64 + 1.0;
                assert!((full.row(r)[k] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interpolation_identities() {
        let s = sino(180, 6, |a, k| (a * 0.1).sin() + k as f64);
        let sparse = sparse_sample(&s, 8).unwrap();
        assert_eq!(interpolate_sinogram(&sparse, &sparse.angles_deg).unwrap(), sparse);
        let full = interpolate_sinogram(&sparse, &full_view_angles(180)).unwrap();
        assert_eq!(full.data.dims(), &[180, 6]);
        for r in (0..180).step_by(8) {
            assert_eq!(full.row(r), s.row(r));
        }
        assert!(interpolate_sinogram(&sparse_sample(&s, 180).unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn wraps_with_detector_flip() {
        // Two views at 0 and 90; at 135 the bracket is (90, flipped 0 at 180).
        let data = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 10.0, 10.0, 10.0]).unwrap();
        let s = Sinogram::new(data, vec![0.0, 90.0], 1.0).unwrap();
        let out = interpolate_sinogram(&s, &[135.0]).unwrap();
        assert_eq!(out.row(0), &[6.5, 6.0, 5.5]);
    }

    #[test]
    fn pad_then_crop() {
        let s = sino(180, 91, |a, k| a * 0.01 + k as f64);
        let p = pad_sinogram(&s, 192, 96).unwrap();
        assert_eq!(p.dims(), &[192, 96]);
        // Row 180 is the 0-degree view mirrored across the detector axis.
        assert_eq!(p.data()[180 * 96 + 2], s.row(0)[90]);
        assert_eq!(p.data()[0], 0.0);
        assert_eq!(crop_sinogram(&p, &s).unwrap(), s);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tns");
        let s = sparse_sample(&sino(180, 7, |a, k| a - k as f64), 4).unwrap();
        write_sinogram(&path, &s).unwrap();
        assert_eq!(read_sinogram::<f64>(&path).unwrap(), s);
    }
}

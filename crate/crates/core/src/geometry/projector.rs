//! Ray-driven parallel-beam projector and its exact adjoint.

use rayon::prelude::*;

use crate::error::{arg_err, Result};

/// Sample spacing along each ray, in pixels.
pub const RAY_STEP: f64 = 0.5;

/// Geometry shared by the forward projector and its adjoint. Pixel `(i, j)`
/// sits at `x = j - (W-1)/2`, `y = (H-1)/2 - i` in pixel units; detector `k`
/// at `s = (k - (D-1)/2) * spacing`. Angle `theta` integrates along
/// `(-sin, cos)` at offset `s` along `(cos, sin)`.
#[derive(Debug, Clone)]
pub struct Projector {
    pub h: usize,
    pub w: usize,
    pub pixel_size: f64,
    pub n_det: usize,
    pub det_spacing: f64,
    trig: Vec<(f64, f64)>,
}

impl Projector {
    pub fn new(h: usize, w: usize, pixel_size: f64, angles_deg: &[f64], n_det: usize, det_spacing: f64) -> Result<Self> {
        if angles_deg.is_empty() {
            return arg_err("angle list is empty");
        }
        if h == 0 || w == 0 || n_det == 0 {
            return arg_err("image and detector sizes must be positive");
        }
        if !(pixel_size > 0.0 && det_spacing > 0.0) {
            return arg_err("pixel size and detector spacing must be positive");
        }
        let trig = angles_deg.iter().map(|a| {
            let (s, c) = a.to_radians().sin_cos();
            (c, s)
        });
        Ok(Self { h, w, pixel_size, n_det, det_spacing, trig: trig.collect() })
    }

    pub fn n_angles(&self) -> usize {
        self.trig.len()
    }

    /// Visits every (pixel, weight) pair of ray `(a, k)` in a fixed order.
    fn trace(&self, a: usize, k: usize, mut visit: impl FnMut(usize, f64)) {
        let (c, s) = self.trig[a];
        let off = (k as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing;
        let (hf, wf) = (self.h as f64, self.w as f64);
        let radius = 0.5 * (hf * hf + wf * wf).sqrt() + 1.0;
        if off.abs() >= radius {
            return;
        }
        let half = (radius * radius - off * off).sqrt();
        let n = (2.0 * half / RAY_STEP).ceil() as usize;
        let (cx, cy) = ((wf - 1.0) / 2.0, (hf - 1.0) / 2.0);
        let weight = RAY_STEP * self.pixel_size;
        for m in 0..n {
            let t = (m as f64 - (n as f64 - 1.0) / 2.0) * RAY_STEP;
            let col = off * c - t * s + cx;
            let row = cy - (off * s + t * c);
            let (r0, c0) = (row.floor(), col.floor());
            let (fr, fc) = (row - r0, col - c0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                let r = r0 + dr;
                if r < 0 || r >= self.h as isize || wr == 0.0 {
                    continue;
                }
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let cc = c0 + dc;
                    if cc < 0 || cc >= self.w as isize || wc == 0.0 {
                        continue;
                    }
                    visit(r as usize * self.w + cc as usize, weight * wr * wc);
                }
            }
        }
    }

    pub fn forward_angle(&self, a: usize, img: &[f64], row: &mut [f64]) {
        for (k, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            self.trace(a, k, |p, wt| acc += wt * img[p]);
            *out = acc;
        }
    }

    /// Accumulates the transpose of angle `a` applied to `row` into `img`.
    pub fn adjoint_angle(&self, a: usize, row: &[f64], img: &mut [f64]) {
        for (k, &v) in row.iter().enumerate() {
            if v != 0.0 {
                self.trace(a, k, |p, wt| img[p] += wt * v);
            }
        }
    }

    /// `[angles x detectors]` projections of a row-major `h x w` image.
    pub fn forward(&self, img: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_angles() * self.n_det];
        out.par_chunks_mut(self.n_det).enumerate().for_each(|(a, row)| self.forward_angle(a, img, row));
        out
    }

    pub fn adjoint(&self, sino: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = (0..self.n_angles())
            .into_par_iter()
            .map(|a| {
                let mut img = vec![0.0; self.h * self.w];
                self.adjoint_angle(a, &sino[a * self.n_det..(a + 1) * self.n_det], &mut img);
                img
            })
            .collect();
        let mut img = vec![0.0; self.h * self.w];
        for p in &parts {
            for (o, v) in img.iter_mut().zip(p) {
                *o += v;
            }
        }
        img
    }
}

/// Detector count that covers the image diagonal.
pub fn default_detectors(h: usize, w: usize) -> usize {
    ((h * h + w * w) as f64).sqrt().ceil() as usize
}

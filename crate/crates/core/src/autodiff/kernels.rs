//! Raw convolution and normalization kernels on row-major slices.
//!
//! Every kernel parallelises over independent output planes and keeps a fixed
//! accumulation order inside each plane, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Output length of a strided, zero-padded window sweep (floor convention).
pub fn out_len(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || k == 0 || input + 2 * pad < k {
        None
    } else {
        Some((input + 2 * pad - k) / stride + 1)
    }
}

/// Half-open range of output indices whose tap `k` lands inside the input.
#[inline]
fn valid_range(k: usize, stride: usize, pad: usize, input: usize, output: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    if input + pad < k + 1 {
        return (0, 0);
    }
    let hi = ((input - 1 + pad - k) / stride + 1).min(output);
    (lo.min(hi), hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Conv2dGeom {
    pub fn new(x: &[usize], wt: &[usize], stride: usize, pad: usize, groups: usize) -> Result<Self> {
        if x.len() != 4 || wt.len() != 4 {
            return shape_err(format!("conv2d expects 4-d input and weight, got {x:?} and {wt:?}"));
        }
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (o, cpg, kh, kw) = (wt[0], wt[1], wt[2], wt[3]);
        if groups == 0 || c % groups != 0 || o % groups != 0 || c / groups != cpg {
            return shape_err(format!(
                "conv2d channel mismatch: input {c} channels, weight {wt:?}, groups {groups}"
            ));
        }
        if stride == 0 {
            return shape_err("conv2d stride must be >= 1");
        }
        let (Some(ho), Some(wo)) = (out_len(h, kh, stride, pad), out_len(w, kw, stride, pad)) else {
            return shape_err(format!("conv2d kernel {kh}x{kw} larger than padded input {h}x{w}"));
        };
        Ok(Self { n, c, h, w, o, kh, kw, stride, pad, groups, ho, wo })
    }

    pub fn out_dims(&self) -> [usize; 4] {
        [self.n, self.o, self.ho, self.wo]
    }
}

pub fn conv2d_forward<T: Scalar>(x: &[T], wt: &[T], g: &Conv2dGeom) -> Vec<T> {
    let Conv2dGeom { c, h, w, o, kh, kw, stride, pad, groups, ho, wo, .. } = *g;
    let cpg = c / groups;
    let opg = o / groups;
    let plane = ho * wo;
    let mut out = vec![T::zero(); g.n * o * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, op)| {
        let (ni, oi) = (idx / o, idx % o);
        let gi = oi / opg;
        for ci in 0..cpg {
            let cin = gi * cpg + ci;
            let xp = &x[(ni * c + cin) * h * w..][..h * w];
            for ky in 0..kh {
                let (oy0, oy1) = valid_range(ky, stride, pad, h, ho);
                for kx in 0..kw {
                    let wv = wt[((oi * cpg + ci) * kh + ky) * kw + kx];
                    let (ox0, ox1) = valid_range(kx, stride, pad, w, wo);
                    if ox0 >= ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let xrow = &xp[iy * w..(iy + 1) * w];
                        let orow = &mut op[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            let ix0 = ox0 + kx - pad;
                            let len = ox1 - ox0;
                            for (ov, &xv) in orow[ox0..ox1].iter_mut().zip(&xrow[ix0..ix0 + len]) {
                                *ov += wv * xv;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                orow[ox] += wv * xrow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Returns (grad_input, grad_weight).
pub fn conv2d_backward<T: Scalar>(x: &[T], wt: &[T], gout: &[T], g: &Conv2dGeom) -> (Vec<T>, Vec<T>) {
    let Conv2dGeom { n, c, h, w, o, kh, kw, stride, pad, groups, ho, wo } = *g;
    let cpg = c / groups;
    let opg = o / groups;
    let plane_in = h * w;
    let plane_out = ho * wo;

    let mut gx = vec![T::zero(); n * c * plane_in];
    gx.par_chunks_mut(plane_in).enumerate().for_each(|(idx, gp)| {
        let (ni, cin) = (idx / c, idx % c);
        let gi = cin / cpg;
        let ci = cin % cpg;
        for oi in gi * opg..(gi + 1) * opg {
            let gop = &gout[(ni * o + oi) * plane_out..][..plane_out];
            for ky in 0..kh {
                let (oy0, oy1) = valid_range(ky, stride, pad, h, ho);
                for kx in 0..kw {
                    let wv = wt[((oi * cpg + ci) * kh + ky) * kw + kx];
                    let (ox0, ox1) = valid_range(kx, stride, pad, w, wo);
                    if ox0 >= ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let grow = &gop[oy * wo..(oy + 1) * wo];
                        let xrow = &mut gp[iy * w..(iy + 1) * w];
                        if stride == 1 {
                            let ix0 = ox0 + kx - pad;
                            let len = ox1 - ox0;
                            for (xv, &gv) in xrow[ix0..ix0 + len].iter_mut().zip(&grow[ox0..ox1]) {
                                *xv += wv * gv;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                xrow[ox * stride + kx - pad] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    });

    let per_out = cpg * kh * kw;
    let mut gw = vec![T::zero(); o * per_out];
    gw.par_chunks_mut(per_out).enumerate().for_each(|(oi, gwc)| {
        let gi = oi / opg;
        for ni in 0..n {
            let gop = &gout[(ni * o + oi) * plane_out..][..plane_out];
            for ci in 0..cpg {
                let cin = gi * cpg + ci;
                let xp = &x[(ni * c + cin) * plane_in..][..plane_in];
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(ky, stride, pad, h, ho);
                    for kx in 0..kw {
                        let (ox0, ox1) = valid_range(kx, stride, pad, w, wo);
                        let mut acc = T::zero();
                        if ox0 < ox1 {
                            for oy in oy0..oy1 {
                                let iy = oy * stride + ky - pad;
                                let grow = &gop[oy * wo..(oy + 1) * wo];
                                let xrow = &xp[iy * w..(iy + 1) * w];
                                if stride == 1 {
                                    let ix0 = ox0 + kx - pad;
                                    let len = ox1 - ox0;
                                    for (&gv, &xv) in grow[ox0..ox1].iter().zip(&xrow[ix0..ix0 + len]) {
                                        acc += gv * xv;
                                    }
                                } else {
                                    for ox in ox0..ox1 {
                                        acc += grow[ox] * xrow[ox * stride + kx - pad];
                                    }
                                }
                            }
                        }
                        gwc[(ci * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    });
    (gx, gw)
}

/// Geometry of the kernel-2, stride-2 transposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
}

impl UpGeom {
    pub fn new(x: &[usize], wt: &[usize]) -> Result<Self> {
        if x.len() != 4 || wt.len() != 4 {
            return shape_err("transposed conv expects 4-d input and weight");
        }
        if wt[0] != x[1] || wt[2] != 2 || wt[3] != 2 {
            return shape_err(format!(
                "transposed conv weight must be [C={}, O, 2, 2], got {wt:?}",
                x[1]
            ));
        }
        Ok(Self { n: x[0], c: x[1], h: x[2], w: x[3], o: wt[1] })
    }

    pub fn out_dims(&self) -> [usize; 4] {
        [self.n, self.o, 2 * self.h, 2 * self.w]
    }
}

pub fn up2_forward<T: Scalar>(x: &[T], wt: &[T], g: &UpGeom) -> Vec<T> {
    let UpGeom { c, h, w, o, .. } = *g;
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); g.n * o * h2 * w2];
    out.par_chunks_mut(h2 * w2).enumerate().for_each(|(idx, op)| {
        let (ni, oi) = (idx / o, idx % o);
        for ci in 0..c {
            let xp = &x[(ni * c + ci) * h * w..][..h * w];
            for ky in 0..2 {
                for kx in 0..2 {
                    let wv = wt[((ci * o + oi) * 2 + ky) * 2 + kx];
                    for y in 0..h {
                        let orow = &mut op[(2 * y + ky) * w2..(2 * y + ky + 1) * w2];
                        for (xi, &xv) in xp[y * w..(y + 1) * w].iter().enumerate() {
                            orow[2 * xi + kx] += wv * xv;
                        }
                    }
                }
            }
        }
    });
    out
}

pub fn up2_backward<T: Scalar>(x: &[T], wt: &[T], gout: &[T], g: &UpGeom) -> (Vec<T>, Vec<T>) {
    let UpGeom { n, c, h, w, o } = *g;
    let (h2, w2) = (2 * h, 2 * w);
    let mut gx = vec![T::zero(); n * c * h * w];
    gx.par_chunks_mut(h * w).enumerate().for_each(|(idx, gp)| {
        let (ni, ci) = (idx / c, idx % c);
        for oi in 0..o {
            let gop = &gout[(ni * o + oi) * h2 * w2..][..h2 * w2];
            for ky in 0..2 {
                for kx in 0..2 {
                    let wv = wt[((ci * o + oi) * 2 + ky) * 2 + kx];
                    for y in 0..h {
                        let grow = &gop[(2 * y + ky) * w2..(2 * y + ky + 1) * w2];
                        for (xi, gv) in gp[y * w..(y + 1) * w].iter_mut().enumerate() {
                            *gv += wv * grow[2 * xi + kx];
                        }
                    }
                }
            }
        }
    });
    let mut gw = vec![T::zero(); c * o * 4];
    gw.par_chunks_mut(o * 4).enumerate().for_each(|(ci, gwc)| {
        for ni in 0..n {
            let xp = &x[(ni * c + ci) * h * w..][..h * w];
            for oi in 0..o {
                let gop = &gout[(ni * o + oi) * h2 * w2..][..h2 * w2];
                for ky in 0..2 {
                    for kx in 0..2 {
                        let mut acc = T::zero();
                        for y in 0..h {
                            let grow = &gop[(2 * y + ky) * w2..(2 * y + ky + 1) * w2];
                            for (xi, &xv) in xp[y * w..(y + 1) * w].iter().enumerate() {
                                acc += xv * grow[2 * xi + kx];
                            }
                        }
                        gwc[(oi * 2 + ky) * 2 + kx] += acc;
                    }
                }
            }
        }
    });
    (gx, gw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dGeom {
    pub n: usize,
    pub c: usize,
    pub input: [usize; 3],
    pub o: usize,
    pub k: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl Conv3dGeom {
    pub fn new(x: &[usize], wt: &[usize], stride: [usize; 3], pad: [usize; 3]) -> Result<Self> {
        if x.len() != 5 || wt.len() != 5 {
            return shape_err(format!("conv3d expects 5-d input and weight, got {x:?} and {wt:?}"));
        }
        if wt[1] != x[1] {
            return shape_err(format!("conv3d channel mismatch: input {x:?}, weight {wt:?}"));
        }
        let input = [x[2], x[3], x[4]];
        let k = [wt[2], wt[3], wt[4]];
        let mut output = [0; 3];
        for a in 0..3 {
            match out_len(input[a], k[a], stride[a], pad[a]) {
                Some(v) => output[a] = v,
                None => {
                    return shape_err(format!(
                        "conv3d axis {a}: kernel {} stride {} pad {} does not fit input {}",
                        k[a], stride[a], pad[a], input[a]
                    ))
                }
            }
        }
        Ok(Self { n: x[0], c: x[1], input, o: wt[0], k, stride, pad, output })
    }

    pub fn out_dims(&self) -> [usize; 5] {
        [self.n, self.o, self.output[0], self.output[1], self.output[2]]
    }
}

pub fn conv3d_forward<T: Scalar>(x: &[T], wt: &[T], g: &Conv3dGeom) -> Vec<T> {
    let Conv3dGeom { c, input: [d, h, w], o, k: [kd, kh, kw], stride: [sd, sh, sw], pad: [pd, ph, pw], output: [dd, ho, wo], .. } = *g;
    let vol_in = d * h * w;
    let vol_out = dd * ho * wo;
    let mut out = vec![T::zero(); g.n * o * vol_out];
    out.par_chunks_mut(vol_out).enumerate().for_each(|(idx, op)| {
        let (ni, oi) = (idx / o, idx % o);
        for ci in 0..c {
            let xv = &x[(ni * c + ci) * vol_in..][..vol_in];
            for kz in 0..kd {
                let (oz0, oz1) = valid_range(kz, sd, pd, d, dd);
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(ky, sh, ph, h, ho);
                    for kx in 0..kw {
                        let (ox0, ox1) = valid_range(kx, sw, pw, w, wo);
                        let wv = wt[(((oi * c + ci) * kd + kz) * kh + ky) * kw + kx];
                        for oz in oz0..oz1 {
                            let iz = oz * sd + kz - pd;
                            for oy in oy0..oy1 {
                                let iy = oy * sh + ky - ph;
                                let xrow = &xv[(iz * h + iy) * w..][..w];
                                let orow = &mut op[(oz * ho + oy) * wo..][..wo];
                                for ox in ox0..ox1 {
                                    orow[ox] += wv * xrow[ox * sw + kx - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

pub fn conv3d_backward<T: Scalar>(x: &[T], wt: &[T], gout: &[T], g: &Conv3dGeom) -> (Vec<T>, Vec<T>) {
    let Conv3dGeom { n, c, input: [d, h, w], o, k: [kd, kh, kw], stride: [sd, sh, sw], pad: [pd, ph, pw], output: [dd, ho, wo] } = *g;
    let vol_in = d * h * w;
    let vol_out = dd * ho * wo;
    let mut gx = vec![T::zero(); n * c * vol_in];
    gx.par_chunks_mut(vol_in).enumerate().for_each(|(idx, gv)| {
        let (ni, ci) = (idx / c, idx % c);
        for oi in 0..o {
            let gop = &gout[(ni * o + oi) * vol_out..][..vol_out];
            for kz in 0..kd {
                let (oz0, oz1) = valid_range(kz, sd, pd, d, dd);
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(ky, sh, ph, h, ho);
                    for kx in 0..kw {
                        let (ox0, ox1) = valid_range(kx, sw, pw, w, wo);
                        let wv = wt[(((oi * c + ci) * kd + kz) * kh + ky) * kw + kx];
                        for oz in oz0..oz1 {
                            let iz = oz * sd + kz - pd;
                            for oy in oy0..oy1 {
                                let iy = oy * sh + ky - ph;
                                let grow = &gop[(oz * ho + oy) * wo..][..wo];
                                let xrow = &mut gv[(iz * h + iy) * w..][..w];
                                for ox in ox0..ox1 {
                                    xrow[ox * sw + kx - pw] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    let per_out = c * kd * kh * kw;
    let mut gw = vec![T::zero(); o * per_out];
    gw.par_chunks_mut(per_out).enumerate().for_each(|(oi, gwc)| {
        for ni in 0..n {
            let gop = &gout[(ni * o + oi) * vol_out..][..vol_out];
            for ci in 0..c {
                let xv = &x[(ni * c + ci) * vol_in..][..vol_in];
                for kz in 0..kd {
                    let (oz0, oz1) = valid_range(kz, sd, pd, d, dd);
                    for ky in 0..kh {
                        let (oy0, oy1) = valid_range(ky, sh, ph, h, ho);
                        for kx in 0..kw {
                            let (ox0, ox1) = valid_range(kx, sw, pw, w, wo);
                            let mut acc = T::zero();
                            for oz in oz0..oz1 {
                                let iz = oz * sd + kz - pd;
                                for oy in oy0..oy1 {
                                    let iy = oy * sh + ky - ph;
                                    let grow = &gop[(oz * ho + oy) * wo..][..wo];
                                    let xrow = &xv[(iz * h + iy) * w..][..w];
                                    for ox in ox0..ox1 {
                                        acc += grow[ox] * xrow[ox * sw + kx - pw];
                                    }
                                }
                            }
                            gwc[((ci * kd + kz) * kh + ky) * kw + kx] += acc;
                        }
                    }
                }
            }
        }
    });
    (gx, gw)
}

/// Channel-axis statistics layout: `[N, C, S]` with `S` the flattened trailing dims.
#[derive(Debug, Clone, Copy)]
pub struct ChannelLayout {
    pub n: usize,
    pub c: usize,
    pub s: usize,
}

impl ChannelLayout {
    pub fn of(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return shape_err(format!("channel op needs at least [N, C], got {dims:?}"));
        }
        Ok(Self { n: dims[0], c: dims[1], s: dims[2..].iter().product() })
    }

    pub fn count(&self) -> usize {
        self.n * self.s
    }

    #[inline]
    pub fn for_channel(&self, ch: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.n).map(move |ni| {
            let start = (ni * self.c + ch) * self.s;
            start..start + self.s
        })
    }
}

pub struct BatchStats<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

pub fn batch_norm_train<T: Scalar>(x: &[T], gamma: &[T], beta: &[T], l: &ChannelLayout, eps: T) -> BatchStats<T> {
    let m = T::c(l.count() as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); l.c];
    let mut mean = vec![T::zero(); l.c];
    let mut var = vec![T::zero(); l.c];
    for ch in 0..l.c {
        let mut s = T::zero();
        for r in l.for_channel(ch) {
            s += x[r].iter().copied().sum::<T>();
        }
        let mu = s / m;
        let mut ss = T::zero();
        for r in l.for_channel(ch) {
            ss += x[r].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
        let v = ss / m;
        let inv = T::one() / (v + eps).sqrt();
        for r in l.for_channel(ch) {
            for i in r {
                let xh = (x[i] - mu) * inv;
                xhat[i] = xh;
                y[i] = gamma[ch] * xh + beta[ch];
            }
        }
        mean[ch] = mu;
        var[ch] = v;
        inv_std[ch] = inv;
    }
    BatchStats { y, xhat, inv_std, mean, var }
}

/// Returns (grad_x, grad_gamma, grad_beta).
pub fn batch_norm_train_backward<T: Scalar>(
    gy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    l: &ChannelLayout,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::c(l.count() as f64);
    let mut gx = vec![T::zero(); gy.len()];
    let mut gg = vec![T::zero(); l.c];
    let mut gb = vec![T::zero(); l.c];
    for ch in 0..l.c {
        let mut sb = T::zero();
        let mut sg = T::zero();
        for r in l.for_channel(ch) {
            for i in r {
                sb += gy[i];
                sg += gy[i] * xhat[i];
            }
        }
        let k = gamma[ch] * inv_std[ch] / m;
        for r in l.for_channel(ch) {
            for i in r {
                gx[i] = k * (m * gy[i] - sb - xhat[i] * sg);
            }
        }
        gg[ch] = sg;
        gb[ch] = sb;
    }
    (gx, gg, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for input in 1..9 {
            for k in 0..4 {
                for stride in 1..4 {
                    for pad in 0..3 {
                        let Some(output) = out_len(input, k + 1, stride, pad) else { continue };
                        let (lo, hi) = valid_range(k, stride, pad, input, output);
                        for o in 0..output {
                            let pos = (o * stride + k) as isize - pad as isize;
                            let inside = pos >= 0 && (pos as usize) < input;
                            assert_eq!(inside, o >= lo && o < hi, "in {input} k {k} s {stride} p {pad} o {o}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn floor_convention_for_even_inputs() {
        assert_eq!(out_len(192, 3, 2, 1), Some(96));
        assert_eq!(out_len(64, 3, 2, 1), Some(32));
        assert_eq!(out_len(2, 5, 1, 1), None);
    }
}

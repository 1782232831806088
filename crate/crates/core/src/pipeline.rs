//! Dual-domain restoration: sparse sinogram -> interpolation -> sinogram
//! network -> FBP -> multi-slice image network.

use crate::data::{gen_continuous_volume, make_quintuplet_pairs, ImageSlice, Volume};
use crate::error::{arg_err, shape_err, Result};
use crate::geometry::{
    crop_sinogram, default_detectors, fbp, full_view_angles, interpolate_sinogram, pad_sinogram, radon_forward,
    sparse_sample, Sinogram,
};
use crate::nn::ScaleProfile;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{stack_batch, unstack, Restorer, Sample};

/// Acquisition and network-layout parameters shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub size: usize,
    pub full_views: usize,
    pub interval: usize,
    pub n_det: usize,
    /// Network input rows and columns (sinogram padded to multiples of 16).
    pub net_rows: usize,
    pub net_cols: usize,
}

fn round16(n: usize) -> usize {
    n.div_ceil(16) * 16
}

impl Geometry {
    pub fn new(size: usize, full_views: usize, interval: usize) -> Result<Self> {
        if size < 16 || !size.is_multiple_of(16) {
            return arg_err(format!("image size must be a multiple of 16, got {size}"));
        }
        if full_views < 2 || interval == 0 || interval > full_views {
            return arg_err(format!("bad view setup: {full_views} views at interval {interval}"));
        }
        let n_det = default_detectors(size, size);
        Ok(Self { size, full_views, interval, n_det, net_rows: round16(full_views), net_cols: round16(n_det) })
    }

    pub fn angles(&self) -> Vec<f64> {
        full_view_angles(self.full_views)
    }

    pub fn sinogram_profile(&self, width_mult: f64) -> Result<ScaleProfile> {
        ScaleProfile::new(width_mult, (self.net_rows, self.net_cols))
    }

    pub fn image_profile(&self, width_mult: f64) -> Result<ScaleProfile> {
        ScaleProfile::new(width_mult, (self.size, self.size))
    }

    /// Padded `[1, rows, cols]` network input; values stay in pixel units.
    pub fn to_net<T: Scalar>(&self, sino: &Sinogram<T>) -> Result<Tensor<T>> {
        pad_sinogram(sino, self.net_rows, self.net_cols)?.reshape(&[1, self.net_rows, self.net_cols])
    }

    pub fn from_net<T: Scalar>(&self, t: &Tensor<T>, like: &Sinogram<T>) -> Result<Sinogram<T>> {
        crop_sinogram(&t.clone().reshape(&[self.net_rows, self.net_cols])?, like)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Seed-determined set of synthetic volumes. Training and test volumes draw
/// from disjoint per-volume seeds derived from one base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSet {
    pub size: usize,
    pub n_volumes: usize,
    pub n_slices: usize,
    pub drift: f64,
    pub seed: u64,
    pub split: Split,
}

impl VolumeSet {
    pub fn volume_seed(&self, k: usize) -> u64 {
        let base = self.seed.wrapping_mul(1 << 20);
        match self.split {
            Split::Train => base.wrapping_add(k as u64),
            Split::Test => base.wrapping_add((1 << 19) + k as u64),
        }
    }

    pub fn generate<T: Scalar>(&self) -> Result<Vec<Volume<T>>> {
        if self.n_volumes == 0 || self.n_volumes >= 1 << 19 {
            return arg_err(format!("volume count {} out of range", self.n_volumes));
        }
        (0..self.n_volumes)
            .map(|k| gen_continuous_volume(self.size, self.n_slices, self.volume_seed(k), self.drift))
            .collect()
    }
}

/// Every Radon-domain quantity derived from one slice.
#[derive(Debug, Clone)]
pub struct Acquisition<T: Scalar> {
    pub full: Sinogram<T>,
    pub sparse: Sinogram<T>,
    pub interp: Sinogram<T>,
}

pub fn acquire<T: Scalar>(img: &ImageSlice<T>, geo: &Geometry) -> Result<Acquisition<T>> {
    if img.height() != geo.size || img.width() != geo.size {
        return shape_err(format!("expected {0}x{0} slices, got {1}x{2}", geo.size, img.height(), img.width()));
    }
    let full = radon_forward(img, &geo.angles(), geo.n_det)?;
    let sparse = sparse_sample(&full, geo.interval)?;
    let interp = interpolate_sinogram(&sparse, &full.angles_deg)?;
    Ok(Acquisition { full, sparse, interp })
}

pub fn acquire_volume<T: Scalar>(vol: &Volume<T>, geo: &Geometry) -> Result<Vec<Acquisition<T>>> {
    vol.slices.iter().map(|s| acquire(s, geo)).collect()
}

/// Sinogram-network samples: interpolated input, full-view target.
pub fn stage1_samples<T: Scalar>(acqs: &[Acquisition<T>], geo: &Geometry) -> Result<Vec<Sample<T>>> {
    acqs.iter().map(|a| Ok(Sample { inputs: vec![geo.to_net(&a.interp)?], target: geo.to_net(&a.full)? })).collect()
}

/// Restores a list of sinograms with the sinogram network.
pub fn restore_sinograms<T: Scalar, R: Restorer<T>>(
    model: &R,
    sinos: &[Sinogram<T>],
    geo: &Geometry,
    batch: usize,
) -> Result<Vec<Sinogram<T>>> {
    let mut out = Vec::with_capacity(sinos.len());
    for chunk in sinos.chunks(batch.max(1)) {
        let nets = chunk.iter().map(|s| geo.to_net(s)).collect::<Result<Vec<_>>>()?;
        let y = model.restore(&[stack_batch(&nets.iter().collect::<Vec<_>>())?])?;
        for (t, like) in unstack(&y).iter().zip(chunk) {
            out.push(geo.from_net(t, like)?);
        }
    }
    Ok(out)
}

pub fn fbp_volume<T: Scalar>(sinos: &[Sinogram<T>], geo: &Geometry) -> Result<Volume<T>> {
    let slices = sinos.iter().map(|s| fbp(s, (geo.size, geo.size))).collect::<Result<Vec<_>>>()?;
    Volume::new(slices, 1.0)
}

fn as_input<T: Scalar>(s: &ImageSlice<T>) -> Tensor<T> {
    s.data.clone().reshape(&[1, s.height(), s.width()]).expect("2-d slice")
}

/// Image-network samples: quintuplets of `inputs` around each valid centre,
/// targets from `truth`.
pub fn stage2_samples<T: Scalar>(inputs: &Volume<T>, truth: &Volume<T>, t: usize) -> Result<Vec<Sample<T>>> {
    Ok(make_quintuplet_pairs(inputs, truth, t)?
        .into_iter()
        .map(|q| Sample { inputs: q.inputs.iter().map(as_input).collect(), target: as_input(&q.target) })
        .collect())
}

/// Slice indices `i - 2T .. i + 2T`, clamped to the volume.
pub fn clamped_window(i: usize, n: usize, t: usize) -> [usize; 5] {
    std::array::from_fn(|k| (i as isize + (k as isize - 2) * t as isize).clamp(0, n as isize - 1) as usize)
}

/// Restores the listed slices of `vol` with a five-slice image network.
pub fn restore_slices<T: Scalar, R: Restorer<T>>(
    model: &R,
    vol: &Volume<T>,
    centres: &[usize],
    t: usize,
    batch: usize,
) -> Result<Vec<ImageSlice<T>>> {
    if model.n_inputs() != 5 {
        return arg_err("image restoration expects a five-slice model");
    }
    let n = vol.len();
    let mut out = Vec::with_capacity(centres.len());
    for chunk in centres.chunks(batch.max(1)) {
        let wins: Vec<[usize; 5]> = chunk.iter().map(|&i| clamped_window(i, n, t)).collect();
        let inputs = (0..5)
            .map(|k| {
                let parts: Vec<Tensor<T>> = wins.iter().map(|w| as_input(&vol.slices[w[k]])).collect();
                stack_batch(&parts.iter().collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let y = model.restore(&inputs)?;
        for t in unstack(&y) {
            let (h, w) = (t.dims()[1], t.dims()[2]);
            out.push(ImageSlice::new(t.reshape(&[h, w])?, 1.0)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shepp_logan;

    #[test]
    fn geometry_pads_to_sixteen() {
        let g = Geometry::new(64, 180, 4).unwrap();
        assert_eq!((g.n_det, g.net_rows, g.net_cols), (91, 192, 96));
        assert!(Geometry::new(60, 180, 4).is_err());
    }

    #[test]
    fn network_layout_round_trips() {
        let g = Geometry::new(32, 180, 8).unwrap();
        let a = acquire(&shepp_logan::<f64>(32).unwrap(), &g).unwrap();
        assert_eq!(a.sparse.n_angles(), 23);
        let t = g.to_net(&a.full).unwrap();
        assert_eq!(t.dims(), &[1, 192, 48]);
        let back = g.from_net(&t, &a.full).unwrap();
        for (x, y) in back.data.data().iter().zip(a.full.data.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn splits_use_disjoint_seeds() {
        let mut set = VolumeSet { size: 16, n_volumes: 3, n_slices: 5, drift: 0.1, seed: 7, split: Split::Train };
        let train: Vec<u64> = (0..3).map(|k| set.volume_seed(k)).collect();
        set.split = Split::Test;
        assert!((0..3).all(|k| !train.contains(&set.volume_seed(k))));
    }

    #[test]
    fn windows_clamp_at_the_ends() {
        assert_eq!(clamped_window(0, 10, 1), [0, 0, 0, 1, 2]);
        assert_eq!(clamped_window(9, 10, 2), [5, 7, 9, 9, 9]);
        assert_eq!(clamped_window(4, 10, 2), [0, 2, 4, 6, 8]);
    }
}

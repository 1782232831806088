//! Spatially continuous multi-slice volumes and quintuplet assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::phantom::{pixel_center, Ellipse, ImageSlice};
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T: Scalar = f64> {
    pub slices: Vec<ImageSlice<T>>,
    pub slice_spacing: f64,
}

impl<T: Scalar> Volume<T> {
    pub fn new(slices: Vec<ImageSlice<T>>, slice_spacing: f64) -> Result<Self> {
        let Some(first) = slices.first() else {
            return arg_err("a volume needs at least one slice");
        };
        let dims = first.data.dims().to_vec();
        if slices.iter().any(|s| s.data.dims() != dims.as_slice()) {
            return shape_err("volume slices must share dims");
        }
        Ok(Self { slices, slice_spacing })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Slices stacked as `[D, H, W]`.
    pub fn to_tensor(&self) -> Tensor<T> {
        let (h, w) = (self.slices[0].height(), self.slices[0].width());
        let data = self.slices.iter().flat_map(|s| s.data.data().iter().copied()).collect();
        Tensor::new(&[self.len(), h, w], data).expect("uniform slice dims")
    }

    pub fn from_tensor(t: &Tensor<T>, slice_spacing: f64) -> Result<Self> {
        let &[d, h, w] = t.dims() else {
            return shape_err(format!("volumes are [D, H, W], got {:?}", t.dims()));
        };
        let slices = (0..d)
            .map(|k| ImageSlice::new(Tensor::new(&[h, w], t.data()[k * h * w..(k + 1) * h * w].to_vec())?, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Self::new(slices, slice_spacing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quintuplet<T: Scalar = f64> {
    /// Slices at offsets -2T, -T, 0, +T, +2T.
    pub inputs: [ImageSlice<T>; 5],
    pub target: ImageSlice<T>,
    pub center: usize,
}

const SUPERSAMPLE: usize = 3;
const N_INNER: usize = 6;
const N_SMALL: usize = 8;

fn random_ellipses(rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    let mut es = vec![Ellipse {
        cx: rng.random_range(-0.05..0.05),
        cy: rng.random_range(-0.05..0.05),
        a: rng.random_range(0.6..0.8),
        b: rng.random_range(0.7..0.9),
        theta_deg: rng.random_range(-15.0..15.0),
        intensity: rng.random_range(0.5..0.7),
    }];
    for _ in 0..N_INNER {
        let sign = if rng.random_bool(0.6) { 1.0 } else { -1.0 };
        es.push(Ellipse {
            cx: rng.random_range(-0.4..0.4),
            cy: rng.random_range(-0.45..0.45),
            a: rng.random_range(0.05..0.25),
            b: rng.random_range(0.05..0.25),
            theta_deg: rng.random_range(0.0..180.0),
            intensity: sign * rng.random_range(0.1..0.35),
        });
    }
    for _ in 0..N_SMALL {
        let r = rng.random_range(0.03..0.07);
        es.push(Ellipse {
            cx: rng.random_range(-0.5..0.5),
            cy: rng.random_range(-0.6..0.6),
            a: r,
            b: r * rng.random_range(0.6..1.0),
            theta_deg: rng.random_range(0.0..180.0),
            intensity: rng.random_range(0.3..0.5),
        });
    }
    es
}

fn perturb(es: &mut [Ellipse], rng: &mut ChaCha8Rng, drift: f64) {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut n = || unit.sample(rng);
    for (k, e) in es.iter_mut().enumerate() {
        let (lim, amin, amax) = match k {
            0 => (0.1, 0.55, 0.92),
            k if k <= N_INNER => (0.5, 0.03, 0.3),
            _ => (0.6, 0.02, 0.08),
        };
        e.cx = (e.cx + 0.02 * drift * n()).clamp(-lim, lim);
        e.cy = (e.cy + 0.02 * drift * n()).clamp(-lim, lim);
        e.a = (e.a + 0.02 * drift * n()).clamp(amin, amax);
        e.b = (e.b + 0.02 * drift * n()).clamp(amin, amax);
        e.theta_deg += 5.0 * drift * n();
        let mag = (e.intensity.abs() + 0.02 * drift * n()).clamp(0.05, 0.8);
        e.intensity = mag.copysign(e.intensity);
    }
}

/// Area-averaged rasterisation on a `SUPERSAMPLE^2` sub-grid, clipped to `[0, 1]`.
fn render<T: Scalar>(es: &[Ellipse], size: usize) -> Tensor<T> {
    let fine = size * SUPERSAMPLE;
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    Tensor::from_fn(&[size, size], |k| {
        let (i, j) = (k / size, k % size);
        let mut acc = 0.0;
        for si in 0..SUPERSAMPLE {
            for sj in 0..SUPERSAMPLE {
                let (x, y) = pixel_center(i * SUPERSAMPLE + si, j * SUPERSAMPLE + sj, fine);
                acc += es.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum::<f64>();
            }
        }
        T::c((acc / norm).clamp(0.0, 1.0))
    })
}

/// Random ellipse phantoms whose parameters follow a Gaussian random walk along
/// the slice axis; `drift` scales the per-slice step (0 gives identical slices).
pub fn gen_continuous_volume<T: Scalar>(size: usize, n_slices: usize, seed: u64, drift: f64) -> Result<Volume<T>> {
    if !(0.0..=1.0).contains(&drift) {
        return arg_err(format!("drift must lie in [0, 1], got {drift}"));
    }
    if n_slices < 5 {
        return arg_err(format!("a volume needs at least 5 slices, got {n_slices}"));
    }
    if size < 16 {
        return arg_err(format!("slice size must be >= 16, got {size}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut es = random_ellipses(&mut rng);
    let mut slices = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        if k > 0 && drift > 0.0 {
            perturb(&mut es, &mut rng, drift);
        }
        slices.push(ImageSlice::new(render(&es, size), 1.0)?);
    }
    Volume::new(slices, 1.0)
}

fn check_interval(n: usize, t: usize) -> Result<()> {
    if t == 0 {
        return arg_err("image interval T must be >= 1");
    }
    if n < 4 * t + 1 {
        return arg_err(format!("{n} slices are too few for interval {t} (need {})", 4 * t + 1));
    }
    Ok(())
}

/// Quintuplets whose inputs and target come from the same volume.
pub fn make_quintuplets<T: Scalar>(vol: &Volume<T>, t: usize) -> Result<Vec<Quintuplet<T>>> {
    make_quintuplet_pairs(vol, vol, t)
}

/// Quintuplets with inputs from `inputs` and the target from `truth`.
pub fn make_quintuplet_pairs<T: Scalar>(inputs: &Volume<T>, truth: &Volume<T>, t: usize) -> Result<Vec<Quintuplet<T>>> {
    let n = inputs.len();
    if truth.len() != n || truth.slices[0].data.dims() != inputs.slices[0].data.dims() {
        return shape_err("input and truth volumes differ in shape");
    }
    check_interval(n, t)?;
    Ok((2 * t..n - 2 * t)
        .map(|i| Quintuplet {
            inputs: std::array::from_fn(|k| inputs.slices[i + k * t - 2 * t].clone()),
            target: truth.slices[i].clone(),
            center: i,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_abs_diff(a: &ImageSlice, b: &ImageSlice) -> f64 {
        a.data.data().iter().zip(b.data.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
    }

    #[test]
    fn zero_drift_repeats_the_slice() {
        let v = gen_continuous_volume::<f64>(32, 6, 3, 0.0).unwrap();
        assert!(v.slices.iter().all(|s| s == &v.slices[0]));
    }

    #[test]
    fn deterministic_in_seed_and_in_range() {
        let a = gen_continuous_volume::<f64>(32, 7, 11, 0.5).unwrap();
        let b = gen_continuous_volume::<f64>(32, 7, 11, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.slices.iter().all(|s| s.data.data().iter().all(|&v| (0.0..=1.0).contains(&v))));
        let c = gen_continuous_volume::<f64>(32, 7, 12, 0.5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn decorrelates_with_slice_distance() {
        let (mut near, mut far) = (0.0, 0.0);
        for seed in 0..10 {
            let v = gen_continuous_volume::<f64>(64, 12, seed, 0.1).unwrap();
            for i in 0..6 {
                near += mean_abs_diff(&v.slices[i + 1], &v.slices[i]);
                far += mean_abs_diff(&v.slices[i + 5], &v.slices[i]);
            }
        }
        assert!(near < far, "{near} vs {far}");
    }

    #[test]
    fn invalid_arguments() {
        assert!(gen_continuous_volume::<f64>(32, 6, 0, 1.5).is_err());
        assert!(gen_continuous_volume::<f64>(32, 6, 0, -0.1).is_err());
        assert!(gen_continuous_volume::<f64>(32, 4, 0, 0.1).is_err());
    }

    #[test]
    fn quintuplet_counts() {
        let v = gen_continuous_volume::<f64>(16, 10, 0, 0.3).unwrap();
        let q = make_quintuplets(&Volume::new(v.slices[..5].to_vec(), 1.0).unwrap(), 1).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].center, 2);
        let q = make_quintuplets(&Volume::new(v.slices[..9].to_vec(), 1.0).unwrap(), 2).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].center, 4);
        assert_eq!(q[0].inputs[0], v.slices[0]);
        assert_eq!(q[0].inputs[4], v.slices[8]);
        assert_eq!(make_quintuplets(&v, 1).unwrap().len(), 6);
        for t in 1..=2 {
            assert_eq!(make_quintuplets(&v, t).unwrap().len(), 10 - 4 * t);
        }
        assert!(make_quintuplets(&v, 3).is_err());
        assert!(make_quintuplets(&v, 0).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let v = gen_continuous_volume::<f32>(16, 5, 1, 0.2).unwrap();
        let t = v.to_tensor();
        assert_eq!(t.dims(), &[5, 16, 16]);
        assert_eq!(Volume::from_tensor(&t, 1.0).unwrap(), v);
    }
}

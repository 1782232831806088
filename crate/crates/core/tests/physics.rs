use sparsect_core::data::{shepp_logan, ImageSlice};
use sparsect_core::geometry::{
    default_detectors, fbp, full_view_angles, interpolate_sinogram, radon_forward, sparse_sample,
};
use sparsect_core::metrics::psnr;
use sparsect_core::Tensor;

fn disk(n: usize, radius: f64) -> ImageSlice {
    // Unit disk whose edge falls off as a raised cosine over four pixels, so
    // the check measures the projector rather than edge aliasing.
    let c = (n as f64 - 1.0) / 2.0;
    ImageSlice::new(
        Tensor::from_fn(&[n, n], |k| {
            let (y, x) = ((k / n) as f64 - c, (k % n) as f64 - c);
            let t = (((x * x + y * y).sqrt() - radius + 2.0) / 4.0).clamp(0.0, 1.0);
            0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }),
        1.0,
    )
    .unwrap()
}

#[test]
fn centered_disk_projects_identically_at_every_angle() {
    let img = disk(64, 20.0);
    let s = radon_forward(&img, &full_view_angles(36), 91).unwrap();
    let peak = s.data.max_abs();
    let mut worst: f64 = 0.0;
    for a in 1..36 {
        for k in 0..91 {
            worst = worst.max((s.row(a)[k] - s.row(0)[k]).abs());
        }
    }
    assert!(worst < 0.01 * peak, "deviation {worst} vs peak {peak}");
}

#[test]
fn impulse_traces_a_sinusoid() {
    let n = 64;
    let (i0, j0) = (20usize, 45usize);
    let mut img = ImageSlice::<f64>::zeros(n, n);
    img.data.data_mut()[i0 * n + j0] = 1.0;
    let (x0, y0) = (j0 as f64 - 31.5, 31.5 - i0 as f64);
    let d = default_detectors(n, n);
    let angles = full_view_angles(180);
    let s = radon_forward(&img, &angles, d).unwrap();
    for (a, theta) in angles.iter().enumerate() {
        let row = s.row(a);
        let k = (0..d).max_by(|&p, &q| row[p].total_cmp(&row[q])).unwrap();
        let pos = k as f64 - (d as f64 - 1.0) / 2.0;
        let (sn, cs) = theta.to_radians().sin_cos();
        let want = x0 * cs + y0 * sn;
        assert!((pos - want).abs() <= 1.0, "angle {theta}: peak at {pos}, expected {want}");
    }
}

#[test]
fn projection_mass_matches_image_mass() {
    for pixel_size in [1.0, 0.5] {
        let mut img = shepp_logan::<f64>(128).unwrap();
        img.pixel_size = pixel_size;
        let s = radon_forward(&img, &full_view_angles(45), default_detectors(128, 128)).unwrap();
        let mass = img.data.sum() * pixel_size;
        for a in 0..45 {
            let m: f64 = s.row(a).iter().sum();
            assert!((m - mass).abs() < 0.01 * mass, "angle row {a}: {m} vs {mass}");
        }
    }
}

#[test]
fn fbp_quality_rises_with_view_count() {
    let img = shepp_logan::<f64>(128).unwrap();
    let d = default_detectors(128, 128);
    let mut last = f64::NEG_INFINITY;
    for views in [12, 23, 45, 90, 180] {
        let s = radon_forward(&img, &full_view_angles(views), d).unwrap();
        let rec = fbp(&s, (128, 128)).unwrap();
        let p = psnr(&rec.clipped(0.0, 1.0), &img, 1.0).unwrap();
        assert!(p > last, "{views} views: {p} dB after {last} dB");
        last = p;
    }
    assert!(last > 20.0, "180-view FBP only reaches {last} dB");
}

#[test]
fn sampled_rows_survive_interpolation_exactly() {
    let img = shepp_logan::<f64>(64).unwrap();
    let full = radon_forward(&img, &full_view_angles(180), 91).unwrap();
    for interval in [4, 8, 16] {
        let sparse = sparse_sample(&full, interval).unwrap();
        let back = interpolate_sinogram(&sparse, &full.angles_deg).unwrap();
        for r in (0..180).step_by(interval) {
            assert_eq!(back.row(r), full.row(r));
        }
        assert_eq!(sparse_sample(&back, interval).unwrap(), sparse);
    }
}

use sparsect_core::baselines::{sart, sart_tv, sart_tv_with_history, sart_with_history, tv_value, SartConfig};
use sparsect_core::data::{shepp_logan, ImageSlice};
use sparsect_core::geometry::{default_detectors, fbp, full_view_angles, radon_forward, sparse_sample, Sinogram};
use sparsect_core::metrics::{psnr, ssim};

fn sparse_sino(size: usize, interval: usize) -> (ImageSlice, Sinogram) {
    let img = shepp_logan::<f64>(size).unwrap();
    let full = radon_forward(&img, &full_view_angles(180), default_detectors(size, size)).unwrap();
    (img, sparse_sample(&full, interval).unwrap())
}

fn tv(img: &ImageSlice) -> f64 {
    tv_value(img.data.data(), img.height(), img.width())
}

#[test]
fn sart_converges_on_consistent_data() {
    let (_, s) = sparse_sino(64, 4);
    let cfg = SartConfig { n_iters: 60, nonneg: false, ..Default::default() };
    let out = sart_with_history(&s, &cfg, &ImageSlice::zeros(64, 64)).unwrap();
    let r = &out.residuals;
    for w in r.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "residual rose: {} -> {}", w[0], w[1]);
    }
    assert!(*r.last().unwrap() < 0.01 * r[0], "final {} vs initial {}", r.last().unwrap(), r[0]);
}

#[test]
fn zero_data_is_a_fixed_point() {
    let (_, s) = sparse_sino(32, 8);
    let zero = s.scaled(0.0);
    let out = sart(&zero, &SartConfig { n_iters: 3, ..Default::default() }, &ImageSlice::zeros(32, 32)).unwrap();
    assert!(out.data.data().iter().all(|&v| v == 0.0));
}

#[test]
fn full_relaxation_is_at_least_as_fast() {
    let (_, s) = sparse_sino(64, 8);
    let run = |relaxation| {
        let cfg = SartConfig { n_iters: 10, relaxation, nonneg: false, ..Default::default() };
        sart_with_history(&s, &cfg, &ImageSlice::zeros(64, 64)).unwrap().residuals
    };
    let (a, b) = (run(1.0), run(0.5));
    assert!(a[10] <= b[10], "{} vs {}", a[10], b[10]);
    assert!(a[10] < a[0] && b[10] < b[0]);
}

#[test]
fn no_tv_steps_reduces_to_sart() {
    let (_, s) = sparse_sino(32, 4);
    let cfg = SartConfig { n_iters: 5, tv_steps: 0, ..Default::default() };
    let init = ImageSlice::zeros(32, 32);
    assert_eq!(sart_tv(&s, &cfg, &init).unwrap(), sart(&s, &cfg, &init).unwrap());
}

#[test]
fn tv_descent_lowers_total_variation() {
    let (_, s) = sparse_sino(64, 8);
    let cfg = SartConfig { n_iters: 20, ..Default::default() };
    let init = ImageSlice::zeros(64, 64);
    let plain = sart(&s, &cfg, &init).unwrap();
    let reg = sart_tv(&s, &cfg, &init).unwrap();
    assert!(tv(&reg) < tv(&plain), "{} vs {}", tv(&reg), tv(&plain));
    let heavy = sart_tv_with_history(&s, &SartConfig { n_iters: 5, tv_steps: 1000, tv_step_size: 0.05, ..cfg }, &init).unwrap();
    assert!(tv(&heavy.image) < 0.2 * tv(&plain), "{} vs {}", tv(&heavy.image), tv(&plain));
}

#[test]
fn reconstructions_scale_with_the_data() {
    let (_, s) = sparse_sino(32, 4);
    let init = ImageSlice::zeros(32, 32);
    for tv_steps in [0, 10] {
        let cfg = SartConfig { n_iters: 10, tv_steps, nonneg: false, ..Default::default() };
        let a = sart_tv(&s, &cfg, &init).unwrap();
        let b = sart_tv(&s.scaled(2.5), &cfg, &init).unwrap();
        let peak = a.data.max_abs();
        for (x, y) in a.data.data().iter().zip(b.data.data()) {
            assert!((2.5 * x - y).abs() <= 1e-6 * 2.5 * peak, "{x} {y}");
        }
    }
}

#[test]
fn sart_tv_beats_fbp_at_45_views() {
    let (img, s) = sparse_sino(128, 4);
    let f = fbp(&s, (128, 128)).unwrap().clipped(0.0, 1.0);
    let r = sart_tv(&s, &SartConfig::default(), &ImageSlice::zeros(128, 128)).unwrap().clipped(0.0, 1.0);
    let (pf, pr) = (psnr(&f, &img, 1.0).unwrap(), psnr(&r, &img, 1.0).unwrap());
    let (sf, sr) = (ssim(&f, &img).unwrap(), ssim(&r, &img).unwrap());
    assert!(pr > pf, "PSNR {pr} vs FBP {pf}");
    assert!(sr > sf, "SSIM {sr} vs FBP {sf}");
}

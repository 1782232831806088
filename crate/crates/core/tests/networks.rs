use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsect_core::autodiff::suite::{composed_lae_check, gradient_suite};
use sparsect_core::autodiff::Graph;
use sparsect_core::cost::{count_params_flops, separable_conv_mult_adds, separable_ratio, standard_conv_mult_adds};
use sparsect_core::nn::{build_discriminator, build_lae, LsAae, Network, ParamRole, ScaleProfile, Sib};
use sparsect_core::data::shepp_logan;
use sparsect_core::geometry::fbp;
use sparsect_core::pipeline::{acquire, Geometry};
use sparsect_core::Tensor;

/// Replaces zero-initialised weights so residual heads do not hide the body.
fn randomize_zero_weights(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        if p.role == ParamRole::Weight && p.tensor.data().iter().all(|&v| v == 0.0) {
            for v in p.tensor.data_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
}

fn slice(seed: u64, hw: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[1, 1, hw, hw], |_| rng.random_range(0.0..1.0))
}

fn cascade(seed: u64) -> LsAae<f64> {
    let p = ScaleProfile::new(0.125, (16, 16)).unwrap();
    let mut m = LsAae::build(&p, seed).unwrap();
    randomize_zero_weights(&mut m.step1, seed + 1);
    randomize_zero_weights(&mut m.step2, seed + 2);
    m
}

fn intermediates(m: &LsAae<f64>, inputs: &[Tensor<f64>]) -> Vec<Vec<f64>> {
    let mut g = Graph::new();
    let mut b = m.bind(&mut g, false, false);
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = m.forward(&mut g, &mut b, &vars).unwrap();
    assert_eq!(g.value(out.output).dims(), &[1, 1, 16, 16]);
    out.intermediate.iter().map(|&v| g.value(v).data().to_vec()).collect()
}

#[test]
fn gradient_suite_passes() {
    for r in gradient_suite(7).unwrap() {
        assert!(r.passed(), "{} max rel err {:.3e} >= {:.0e}", r.name, r.max_rel_err, r.tol);
    }
}

#[test]
fn composed_check_is_seed_robust() {
    for seed in [1, 2] {
        let r = composed_lae_check(seed).unwrap();
        assert!(r.passed(), "seed {seed}: {:.3e}", r.max_rel_err);
    }
}

#[test]
fn separable_saving_formula() {
    for (k, c_in, c_out, h, w) in [(3u64, 16u64, 32u64, 8u64, 8u64), (3, 7, 5, 3, 4), (5, 4, 64, 2, 2)] {
        let std = standard_conv_mult_adds(c_in, c_out, k, h, w);
        let sep = separable_conv_mult_adds(c_in, c_out, k, h, w);
        let (num, den) = separable_ratio(c_out, k);
        // std / sep == k^2 c_out / (k^2 + c_out), compared exactly by cross-multiplying.
        assert_eq!(std * den, sep * num);
    }
    let (num, den) = separable_ratio(1_000_000, 3);
    let limit = num as f64 / den as f64;
    assert!(limit > 8.999 && limit < 9.0);
    let full = count_params_flops(&build_lae(&ScaleProfile::full()).unwrap(), &[1, 192, 512]).unwrap();
    let saving = full.separable_saving();
    assert!((7.0..=9.0).contains(&saving), "{saving}");
}

#[test]
fn full_scale_parameter_counts() {
    let lae = count_params_flops(&build_lae(&ScaleProfile::full()).unwrap(), &[1, 192, 512]).unwrap();
    let disc = count_params_flops(&build_discriminator(&ScaleProfile::full()).unwrap(), &[1, 192, 512]).unwrap();
    assert_eq!(lae.total.params, 1_143_569);
    assert_eq!(disc.total.params, 634_980);
    let total = (lae.total.params + disc.total.params) as f64;
    assert!((total - 1.675e6).abs() / 1.675e6 <= 0.10);
    // The executable network agrees with the static count.
    let net = Network::<f32>::new(build_lae(&ScaleProfile::full()).unwrap(), 0).unwrap();
    assert_eq!(net.num_learnable() as u64, lae.total.params);
}

#[test]
fn step_one_blocks_share_weights() {
    let m = cascade(11);
    let s = slice(1, 16);
    let mids = intermediates(&m, &vec![s; 5]);
    assert_eq!(mids[0], mids[1]);
    assert_eq!(mids[1], mids[2]);
    assert!(mids[0].iter().any(|&v| v != 0.0));
}

#[test]
fn swapping_outer_slices_leaves_the_middle_triplet() {
    let m = cascade(12);
    let slices: Vec<Tensor<f64>> = (0..5).map(|k| slice(20 + k, 16)).collect();
    let mut swapped = slices.clone();
    swapped.swap(0, 4);
    let a = intermediates(&m, &slices);
    let b = intermediates(&m, &swapped);
    assert_eq!(a[1], b[1]);
    assert_ne!(a[0], b[0]);
    assert_ne!(a[2], b[2]);
}

#[test]
fn sib_is_smaller_and_keeps_dims() {
    let p = ScaleProfile::new(0.25, (32, 32)).unwrap();
    let ls = LsAae::<f64>::build(&p, 0).unwrap();
    let sib = Sib::<f64>::build(&p, 0).unwrap();
    assert!(sib.num_learnable() < ls.num_learnable());
    let slices: Vec<Tensor<f64>> = (0..5).map(|k| slice(k, 32)).collect();
    assert_eq!(sib.infer(&slices).unwrap().dims(), &[1, 1, 32, 32]);
    assert_eq!(ls.infer(&slices).unwrap().dims(), &[1, 1, 32, 32]);
    let zeros = vec![Tensor::zeros(&[1, 1, 32, 32]); 5];
    assert!(sib.infer(&zeros).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn untrained_discriminator_stays_near_one_half() {
    // A real slice and its sparse-view reconstruction, scored as one batch.
    let geo = Geometry::new(64, 180, 4).unwrap();
    let real = shepp_logan::<f64>(64).unwrap();
    let fake = fbp(&acquire(&real, &geo).unwrap().sparse, (64, 64)).unwrap();
    let mut pair = real.data.data().to_vec();
    pair.extend_from_slice(fake.data.data());
    let x = Tensor::new(&[2, 1, 64, 64], pair).unwrap();
    let p = geo.image_profile(0.25).unwrap();
    let mut inside = 0;
    let n = 50;
    for seed in 0..n {
        let d = Network::<f64>::new(build_discriminator(&p).unwrap(), seed).unwrap();
        let mut g = Graph::new();
        let mut b = d.bind(&mut g, false, true);
        let xv = g.constant(x.clone());
        let out = d.forward(&mut g, &mut b, xv).unwrap();
        inside += g.value(out).data().iter().filter(|&&v| v > 0.3 && v < 0.7).count();
    }
    assert!(inside as f64 >= 0.95 * (2 * n) as f64, "{inside} of {}", 2 * n);
}

#[test]
fn every_built_network_is_finite() {
    let p = ScaleProfile::new(0.25, (32, 32)).unwrap();
    let x = slice(5, 32);
    for spec in [build_lae(&p).unwrap(), build_discriminator(&p).unwrap()] {
        let net = Network::<f64>::new(spec, 9).unwrap();
        assert!(net.infer(&x).unwrap().data().iter().all(|v| v.is_finite()));
    }
}

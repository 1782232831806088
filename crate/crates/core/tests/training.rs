use sparsect_core::data::{gen_continuous_volume, shepp_logan};
use sparsect_core::nn::{build_discriminator, build_lae, build_lae_residual, LsAae, Network, ScaleProfile};
use sparsect_core::pipeline::{acquire, acquire_volume, stage1_samples, stage2_samples, Geometry};
use sparsect_core::train::{evaluate_mse, load_checkpoint, save_checkpoint, train_stage, Restorer, Sample, TrainConfig};

fn stage1_data(geo: &Geometry) -> Vec<Sample<f64>> {
    let mut data = Vec::new();
    for seed in 0..2 {
        let v = gen_continuous_volume::<f64>(geo.size, 5, 100 + seed, 0.5).unwrap();
        data.extend(stage1_samples(&acquire_volume(&v, geo).unwrap(), geo).unwrap());
    }
    data.extend(stage1_samples(&[acquire(&shepp_logan(geo.size).unwrap(), geo).unwrap()], geo).unwrap());
    data
}

fn small_models(geo: &Geometry, residual: bool) -> (Network<f64>, Network<f64>) {
    let p = geo.sinogram_profile(0.25).unwrap();
    let spec = if residual { build_lae_residual(&p) } else { build_lae(&p) }.unwrap();
    (Network::new(spec, 1).unwrap(), Network::new(build_discriminator(&p).unwrap(), 2).unwrap())
}

fn param_values(net: &Network<f64>) -> Vec<Vec<f64>> {
    net.params().iter().map(|p| p.tensor.data().to_vec()).collect()
}

#[test]
fn zero_steps_leave_weights_unchanged() {
    let geo = Geometry::new(32, 180, 4).unwrap();
    let data = stage1_data(&geo);
    let (mut g, mut d) = small_models(&geo, true);
    let (g0, d0) = (param_values(&g), param_values(&d));
    let out = train_stage(&mut g, &mut d, &data, &TrainConfig { steps: 0, ..Default::default() }).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(param_values(&g), g0);
    assert_eq!(param_values(&d), d0);
}

#[test]
fn toy_stage_one_halves_the_training_error() {
    let geo = Geometry::new(32, 180, 4).unwrap();
    let data = stage1_data(&geo);
    let (mut g, mut d) = small_models(&geo, false);
    let before = evaluate_mse(&g, &data, 4).unwrap();
    let cfg = TrainConfig { steps: 500, batch: 2, seed: 5, ..Default::default() };
    train_stage(&mut g, &mut d, &data, &cfg).unwrap();
    let after = evaluate_mse(&g, &data, 4).unwrap();
    assert!(after < 0.5 * before, "{before:.4e} -> {after:.4e}");
}

#[test]
fn adversarial_term_is_skipped_when_unweighted() {
    let geo = Geometry::new(32, 180, 4).unwrap();
    let data = stage1_data(&geo);
    let (mut g, mut d) = small_models(&geo, true);
    let cfg = TrainConfig { steps: 3, batch: 2, alpha2: 0.0, ..Default::default() };
    assert_eq!(train_stage(&mut g, &mut d, &data, &cfg).unwrap().adversarial_evals, 0);
    let cfg = TrainConfig { steps: 3, batch: 2, ..Default::default() };
    let out = train_stage(&mut g, &mut d, &data, &cfg).unwrap();
    assert_eq!(out.adversarial_evals, 3);
    assert!(out.trace.iter().all(|r| r.l_adv > 0.0 && r.l_adv < 1.0));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let geo = Geometry::new(32, 180, 4).unwrap();
    let data = stage1_data(&geo);
    let cfg = TrainConfig { steps: 4, batch: 2, seed: 9, lr: 1e-3, ..Default::default() };
    let run = || {
        let (mut g, mut d) = small_models(&geo, true);
        let out = train_stage(&mut g, &mut d, &data, &cfg).unwrap();
        (out.trace, param_values(&g), param_values(&d))
    };
    assert_eq!(run(), run());
}

#[test]
fn stage_two_checkpoint_round_trips() {
    let v = gen_continuous_volume::<f64>(32, 7, 3, 0.3).unwrap();
    let data = stage2_samples(&v, &v, 1).unwrap();
    let p = ScaleProfile::new(0.125, (32, 32)).unwrap();
    let mut m = LsAae::<f64>::build(&p, 4).unwrap();
    let mut d = Network::new(build_discriminator(&p).unwrap(), 5).unwrap();
    let cfg = TrainConfig { steps: 2, batch: 2, stage: 2, ..Default::default() };
    train_stage(&mut m, &mut d, &data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &m, Some(&d), &cfg.to_kv()).unwrap();
    let mut fresh = LsAae::<f64>::build(&p, 99).unwrap();
    let mut fresh_d = Network::new(build_discriminator(&p).unwrap(), 98).unwrap();
    load_checkpoint(dir.path(), &mut fresh, Some(&mut fresh_d)).unwrap();
    let inputs: Vec<_> = data[0].inputs.iter().map(|t| t.clone().reshape(&[1, 1, 32, 32]).unwrap()).collect();
    assert_eq!(m.restore(&inputs).unwrap(), fresh.restore(&inputs).unwrap());
    assert_eq!(param_values(&d), param_values(&fresh_d));
}

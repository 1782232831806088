//! Training objectives, as graph nodes and as plain scalars.

use super::TrainConfig;
use crate::autodiff::{Graph, Var};
use crate::error::{arg_err, Result};
use crate::scalar::Scalar;

/// Mean squared error per pixel, averaged over the batch.
pub fn loss_mse<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var) -> Result<Var> {
    g.mse(pred, gt)
}

/// `1 - D(G(I))`, averaged over the batch of discriminator outputs.
pub fn loss_adv<T: Scalar>(g: &mut Graph<T>, d_fake: Var) -> Result<Var> {
    let m = g.mean(d_fake)?;
    let neg = g.scale(m, -T::one())?;
    g.add_scalar(neg, T::one())
}

/// Per-pixel isotropic TV of the prediction.
pub fn loss_tv<T: Scalar>(g: &mut Graph<T>, pred: Var) -> Result<Var> {
    g.total_variation(pred)
}

pub fn loss_ae<T: Scalar>(g: &mut Graph<T>, mse: Var, adv: Option<Var>, reg: Var, cfg: &TrainConfig) -> Result<Var> {
    let mut terms = vec![(mse, T::c(cfg.alpha1)), (reg, T::c(cfg.alpha3))];
    if let Some(a) = adv {
        terms.insert(1, (a, T::c(cfg.alpha2)));
    }
    g.weighted_sum(&terms)
}

/// `1 - D(I_gt) + D(G(I))` with batch means of both discriminator outputs.
pub fn loss_disc<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let r = g.mean(d_real)?;
    let f = g.mean(d_fake)?;
    let diff = g.weighted_sum(&[(f, T::one()), (r, -T::one())])?;
    g.add_scalar(diff, T::one())
}

fn probability(name: &str, d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return arg_err(format!("{name} must be a probability, got {d}"));
    }
    Ok(())
}

pub fn adv_value(d_fake: f64) -> Result<f64> {
    probability("d_fake", d_fake)?;
    Ok(1.0 - d_fake)
}

pub fn disc_value(d_real: f64, d_fake: f64) -> Result<f64> {
    probability("d_real", d_real)?;
    probability("d_fake", d_fake)?;
    Ok(1.0 - d_real + d_fake)
}

pub fn ae_value(mse: f64, adv: f64, reg: f64, cfg: &TrainConfig) -> f64 {
    cfg.alpha1 * mse + cfg.alpha2 * adv + cfg.alpha3 * reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn scalar_forms() {
        assert_eq!(adv_value(1.0).unwrap(), 0.0);
        assert_eq!(adv_value(0.0).unwrap(), 1.0);
        assert_eq!(adv_value(0.25).unwrap(), 0.75);
        assert!(adv_value(1.5).is_err());
        assert_eq!(disc_value(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(disc_value(0.5, 0.5).unwrap(), 1.0);
        assert!((disc_value(0.8, 0.3).unwrap() - 0.5).abs() < 1e-15);
        assert!(disc_value(-0.1, 0.3).is_err());
        let cfg = TrainConfig::default();
        assert!((ae_value(0.5, 0.4, 10.0, &cfg) - (0.5 + 4e-4 + 2e-7)).abs() < 1e-15);
        assert_eq!(ae_value(0.0, 0.0, 0.0, &cfg), 0.0);
    }

    #[test]
    fn graph_forms_match_scalar_forms() {
        let mut g = Graph::<f64>::new();
        let dr = g.constant(Tensor::new(&[2], vec![0.7, 0.9]).unwrap());
        let df = g.constant(Tensor::new(&[2], vec![0.2, 0.4]).unwrap());
        let l = loss_disc(&mut g, dr, df).unwrap();
        assert!((g.value(l).data()[0] - disc_value(0.8, 0.3).unwrap()).abs() < 1e-12);
        let a = loss_adv(&mut g, df).unwrap();
        assert!((g.value(a).data()[0] - 0.7).abs() < 1e-12);
    }
}

//! Adam with bias correction.

use crate::error::{shape_err, Result};
use crate::nn::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, betas: (0.9, 0.999), eps: 1e-8 }
    }
}

/// First and second moment estimates for one list of parameter tensors.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(sizes: &[usize]) -> Self {
        Self { t: 0, m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(), v: sizes.iter().map(|&n| vec![T::zero(); n]).collect() }
    }

    pub fn for_network(net: &Network<T>) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| if p.role.learnable() { p.tensor.len() } else { 0 }).collect();
        Self::new(&sizes)
    }
}

/// One Adam update of every parameter with a gradient; `None` leaves the
/// parameter (and its moments) untouched.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[Option<Vec<T>>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return shape_err(format!("{} params, {} grads, {} moment slots", params.len(), grads.len(), state.m.len()));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.len() != params[i].len() || state.m[i].len() != g.len() {
                return shape_err(format!("parameter {i}: {} values, gradient {}", params[i].len(), g.len()));
            }
        }
    }
    state.t += 1;
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (b1, b2, lr, eps) = (T::c(b1), T::c(b2), T::c(cfg.lr), T::c(cfg.eps));
    let (c1, c2) = (T::c(c1), T::c(c2));
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, p) in params[i].iter_mut().enumerate() {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam update of a network's learnable parameters from [`Network::grads`].
pub fn adam_step_network<T: Scalar>(
    net: &mut Network<T>,
    grads: &[Option<Vec<T>>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut slices: Vec<&mut [T]> = net.params_mut().iter_mut().map(|p| p.tensor.data_mut()).collect();
    adam_step(&mut slices, grads, state, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0f64, -2.0];
        let mut st = AdamState::new(&[2]);
        adam_step(&mut [&mut p[..]], &[Some(vec![0.0, 0.0])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig { lr: 1e-3, ..Default::default() };
        let mut p = vec![0.5f64, 0.5];
        let mut st = AdamState::new(&[2]);
        adam_step(&mut [&mut p[..]], &[Some(vec![3.0, -0.2])], &mut st, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((p[0] - (0.5 - 1e-3 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (0.5 + 1e-3 * 0.2 / (0.2 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = vec![0.0f64; 3];
        let mut st = AdamState::new(&[3]);
        assert!(adam_step(&mut [&mut p[..]], &[Some(vec![1.0])], &mut st, &AdamConfig::default()).is_err());
    }
}

//! Finite-difference verification of every primitive and of a small composed
//! autoencoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, Activation, BnMode, Graph, Var};
use crate::error::Result;
use crate::nn::{build_lae, Network, ScaleProfile};
use crate::tensor::Tensor;

pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const COMPOSED_TOL: f64 = 1e-3;
const EPS: f64 = 1e-6;
/// Probe size for the composed check. Thousands of ReLUs sit downstream of
/// every coordinate there, and smaller probes keep them off their kinks.
const COMPOSED_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

fn rand_t(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU kinks are never crossed by a probe.
fn off_kink(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

type Loss = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

/// Reduces an output to a scalar through a fixed quadratic, so every output
/// coordinate contributes a distinct weight.
fn reduce(g: &mut Graph<f64>, y: Var, target: &Tensor<f64>) -> Result<Var> {
    let t = g.constant(target.clone());
    g.mse(y, t)
}

/// Runs the primitive checks. Each one reduces the primitive's output to a
/// scalar with an MSE against a fixed random target.
pub fn primitive_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(&str, Vec<Tensor<f64>>, Vec<usize>, Loss)> = Vec::new();

    cases.push((
        "conv2d",
        vec![rand_t(&mut rng, &[2, 3, 6, 5]), rand_t(&mut rng, &[4, 3, 3, 3])],
        vec![2, 4, 3, 3],
        Box::new(|g, v| g.conv2d(v[0], v[1], 2, 1)),
    ));
    cases.push((
        "depthwise_conv2d",
        vec![rand_t(&mut rng, &[2, 3, 5, 5]), rand_t(&mut rng, &[3, 1, 3, 3])],
        vec![2, 3, 5, 5],
        Box::new(|g, v| g.depthwise_conv2d(v[0], v[1], 1, 1)),
    ));
    cases.push((
        "grouped_conv2d",
        vec![rand_t(&mut rng, &[1, 4, 5, 4]), rand_t(&mut rng, &[6, 2, 3, 3])],
        vec![1, 6, 5, 4],
        Box::new(|g, v| g.conv2d_grouped(v[0], v[1], 1, 1, 2)),
    ));
    cases.push((
        "depthwise_separable_conv2d",
        vec![rand_t(&mut rng, &[2, 3, 6, 6]), rand_t(&mut rng, &[3, 1, 3, 3]), rand_t(&mut rng, &[5, 3, 1, 1])],
        vec![2, 5, 3, 3],
        Box::new(|g, v| g.depthwise_separable_conv2d(v[0], v[1], v[2], 2, 1)),
    ));
    cases.push((
        "conv_transpose2d",
        vec![rand_t(&mut rng, &[2, 3, 3, 4]), rand_t(&mut rng, &[3, 2, 2, 2])],
        vec![2, 2, 6, 8],
        Box::new(|g, v| g.conv_transpose2d(v[0], v[1])),
    ));
    cases.push((
        "conv3d",
        vec![rand_t(&mut rng, &[1, 2, 3, 4, 4]), rand_t(&mut rng, &[3, 2, 3, 3, 3])],
        vec![1, 3, 1, 2, 2],
        Box::new(|g, v| g.conv3d(v[0], v[1], [1, 2, 2], [0, 1, 1])),
    ));
    cases.push((
        "bias_add",
        vec![rand_t(&mut rng, &[2, 3, 2, 2]), rand_t(&mut rng, &[3])],
        vec![2, 3, 2, 2],
        Box::new(|g, v| g.bias_add(v[0], v[1])),
    ));
    cases.push((
        "batch_norm_train",
        vec![rand_t(&mut rng, &[3, 2, 3, 2]), rand_t(&mut rng, &[2]), rand_t(&mut rng, &[2])],
        vec![3, 2, 3, 2],
        Box::new(|g, v| Ok(g.batch_norm(v[0], v[1], v[2], BnMode::Train { eps: 1e-5 })?.0)),
    ));
    cases.push((
        "batch_norm_eval",
        vec![rand_t(&mut rng, &[2, 2, 3, 2]), rand_t(&mut rng, &[2]), rand_t(&mut rng, &[2])],
        vec![2, 2, 3, 2],
        Box::new(|g, v| {
            let (mean, var) = ([0.1, -0.2], [0.8, 1.3]);
            Ok(g.batch_norm(v[0], v[1], v[2], BnMode::Eval { mean: &mean, var: &var, eps: 1e-5 })?.0)
        }),
    ));
    cases.push(("relu", vec![off_kink(&mut rng, &[2, 3, 4])], vec![2, 3, 4], Box::new(|g, v| g.activation(v[0], Activation::Relu))));
    cases.push(("sigmoid", vec![rand_t(&mut rng, &[2, 3, 4])], vec![2, 3, 4], Box::new(|g, v| g.activation(v[0], Activation::Sigmoid))));
    cases.push((
        "add",
        vec![rand_t(&mut rng, &[2, 3]), rand_t(&mut rng, &[2, 3])],
        vec![2, 3],
        Box::new(|g, v| g.add(v[0], v[1])),
    ));
    cases.push(("scale", vec![rand_t(&mut rng, &[5])], vec![5], Box::new(|g, v| g.scale(v[0], -1.7))));
    cases.push(("add_scalar", vec![rand_t(&mut rng, &[5])], vec![5], Box::new(|g, v| g.add_scalar(v[0], 0.3))));
    cases.push((
        "concat_channels",
        vec![rand_t(&mut rng, &[2, 1, 3, 2]), rand_t(&mut rng, &[2, 2, 3, 2])],
        vec![2, 3, 3, 2],
        Box::new(|g, v| g.concat_channels(&[v[0], v[1]])),
    ));
    cases.push((
        "narrow_channels",
        vec![rand_t(&mut rng, &[2, 4, 2, 2])],
        vec![2, 2, 2, 2],
        Box::new(|g, v| g.narrow_channels(v[0], 1, 2)),
    ));
    cases.push(("reshape", vec![rand_t(&mut rng, &[2, 6])], vec![3, 4], Box::new(|g, v| g.reshape(v[0], &[3, 4]))));
    cases.push(("sum", vec![rand_t(&mut rng, &[2, 3])], vec![1], Box::new(|g, v| g.sum(v[0]))));
    cases.push(("mean", vec![rand_t(&mut rng, &[2, 3])], vec![1], Box::new(|g, v| g.mean(v[0]))));
    cases.push(("mean_per_sample", vec![rand_t(&mut rng, &[3, 2, 2])], vec![3], Box::new(|g, v| g.mean_per_sample(v[0]))));
    cases.push((
        "weighted_sum",
        vec![rand_t(&mut rng, &[1]), rand_t(&mut rng, &[1])],
        vec![1],
        Box::new(|g, v| g.weighted_sum(&[(v[0], 0.7), (v[1], -2.0)])),
    ));

    let mut out = Vec::new();
    for (name, inputs, out_dims, f) in cases {
        let target = rand_t(&mut rng, &out_dims);
        let err = grad_check(
            |g, v| {
                let y = f(g, v)?;
                reduce(g, y, &target)
            },
            &inputs,
            EPS,
        )?;
        out.push(CheckResult { name: name.into(), max_rel_err: err, tol: PRIMITIVE_TOL });
    }
    // Losses that are scalar by construction are checked directly.
    let pred = rand_t(&mut rng, &[2, 1, 4, 5]);
    let gt = rand_t(&mut rng, &[2, 1, 4, 5]);
    let err = grad_check(|g, v| g.mse(v[0], v[1]), &[pred.clone(), gt], EPS)?;
    out.push(CheckResult { name: "mse".into(), max_rel_err: err, tol: PRIMITIVE_TOL });
    let err = grad_check(|g, v| g.total_variation(v[0]), &[pred], EPS)?;
    out.push(CheckResult { name: "total_variation".into(), max_rel_err: err, tol: PRIMITIVE_TOL });
    Ok(out)
}

/// Gradient check of a width-0.125 autoencoder on a 32 x 32 batch of two,
/// with training-mode batch norm: every input coordinate plus a sample of
/// parameter coordinates from every parameter tensor.
pub fn composed_lae_check(seed: u64) -> Result<CheckResult> {
    let profile = ScaleProfile::new(0.125, (32, 32))?;
    let net = Network::<f64>::new(build_lae(&profile)?, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let x = rand_t(&mut rng, &[2, 1, 32, 32]);
    let target = rand_t(&mut rng, &[2, 1, 32, 32]);

    let loss_of = |net: &Network<f64>, g: &mut Graph<f64>, x: Var, grad: bool| -> Result<(Var, crate::nn::network::Bound<f64>)> {
        let mut b = net.bind(g, grad, true);
        let y = net.forward(g, &mut b, x)?;
        Ok((reduce(g, y, &target)?, b))
    };
    let input_err = grad_check(|g, v| Ok(loss_of(&net, g, v[0], false)?.0), std::slice::from_ref(&x), COMPOSED_EPS)?;

    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let (l, b) = loss_of(&net, &mut g, xv, true)?;
    let grads = g.backward(l)?;
    let analytic = net.grads(&b, &grads);
    let eval = |net: &Network<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (l, _) = loss_of(net, &mut g, xv, false)?;
        Ok(g.value(l).data()[0])
    };
    let mut worst = input_err;
    let mut probe = net.clone();
    for (pi, a) in analytic.iter().enumerate() {
        let Some(a) = a else { continue };
        for _ in 0..4 {
            let k = rng.random_range(0..a.len());
            let orig = probe.params()[pi].tensor.data()[k];
            probe.params_mut()[pi].tensor.data_mut()[k] = orig + COMPOSED_EPS;
            let up = eval(&probe)?;
            probe.params_mut()[pi].tensor.data_mut()[k] = orig - COMPOSED_EPS;
            let down = eval(&probe)?;
            probe.params_mut()[pi].tensor.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * COMPOSED_EPS);
            worst = worst.max((a[k] - numeric).abs() / 1f64.max(a[k].abs()).max(numeric.abs()));
        }
    }
    Ok(CheckResult { name: "composed_lae".into(), max_rel_err: worst, tol: COMPOSED_TOL })
}

/// Every primitive check followed by the composed check.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut all = primitive_checks(seed)?;
    all.push(composed_lae_check(seed)?);
    Ok(all)
}

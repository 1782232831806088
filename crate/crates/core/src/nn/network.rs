//! Executable networks built from a [`NetworkSpec`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{BlockSpec, Head, LayerKind, NetworkSpec};
use crate::autodiff::{BnMode, Gradients, Graph, ObservedStats, Var, BN_EPS, BN_MOMENTUM};
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn learnable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }
}

#[derive(Debug, Clone)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub role: ParamRole,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
enum UnitOp {
    Conv2d { stride: usize, pad: usize, groups: usize },
    Conv3d { stride: [usize; 3], pad: [usize; 3] },
    Up2,
}

#[derive(Debug, Clone)]
struct Unit {
    op: UnitOp,
    weight: usize,
    bias: Option<usize>,
    bn: Option<BnIdx>,
    relu: bool,
}

#[derive(Debug, Clone)]
enum Shortcut {
    None,
    Identity,
    Projection(Unit),
}

#[derive(Debug, Clone)]
enum Exec {
    Unit(Unit),
    Squeeze,
    Block { expand: Unit, dw: Unit, project: Unit, shortcut: Shortcut },
}

/// Parameter bindings of one network inside one graph.
pub struct Bound<T: Scalar> {
    vars: Vec<Option<Var>>,
    observed: Vec<(usize, usize, ObservedStats<T>)>,
    train_bn: bool,
}

impl<T: Scalar> Bound<T> {
    pub fn var(&self, param: usize) -> Option<Var> {
        self.vars[param]
    }
}

/// A network with its parameters and running statistics.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    exec: Vec<Exec>,
}

struct Builder<'a, T: Scalar> {
    params: Vec<Param<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, role: ParamRole, tensor: Tensor<T>) -> usize {
        self.params.push(Param { name, role, tensor });
        self.params.len() - 1
    }

    fn weight(&mut self, name: &str, dims: &[usize], fan_in: usize, zero: bool) -> usize {
        let t = if zero {
            Tensor::zeros(dims)
        } else {
            let std = (2.0 / fan_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let rng = &mut *self.rng;
            Tensor::from_fn(dims, |_| T::c(normal.sample(rng)))
        };
        self.add(format!("{name}.weight"), ParamRole::Weight, t)
    }

    fn bn(&mut self, name: &str, c: usize) -> BnIdx {
        BnIdx {
            gamma: self.add(format!("{name}.bn.gamma"), ParamRole::BnGamma, Tensor::full(&[c], T::one())),
            beta: self.add(format!("{name}.bn.beta"), ParamRole::BnBeta, Tensor::zeros(&[c])),
            mean: self.add(format!("{name}.bn.running_mean"), ParamRole::RunningMean, Tensor::zeros(&[c])),
            var: self.add(format!("{name}.bn.running_var"), ParamRole::RunningVar, Tensor::full(&[c], T::one())),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, ic: usize, oc: usize, k: usize, stride: usize, pad: usize, groups: usize, bn: bool, relu: bool, bias: bool, zero: bool) -> Unit {
        let weight = self.weight(name, &[oc, ic / groups, k, k], ic / groups * k * k, zero);
        let bias = bias.then(|| self.add(format!("{name}.bias"), ParamRole::Bias, Tensor::zeros(&[oc])));
        let bn = bn.then(|| self.bn(name, oc));
        Unit { op: UnitOp::Conv2d { stride, pad, groups }, weight, bias, bn, relu }
    }

    fn block(&mut self, name: &str, b: &BlockSpec) -> Exec {
        let ic = b.in_channels();
        let hid = b.hidden();
        let expand = self.conv(&format!("{name}.expand"), ic, hid, 1, 1, 0, 1, true, true, false, false);
        let dw = self.conv(&format!("{name}.depthwise"), hid, hid, 3, b.stride, 1, hid, true, true, false, false);
        let project = self.conv(&format!("{name}.project"), hid, b.oc, 1, 1, 0, 1, true, false, false, false);
        let shortcut = if !b.has_shortcut() {
            Shortcut::None
        } else if b.projection_shortcut() {
            Shortcut::Projection(self.conv(&format!("{name}.shortcut"), ic, b.oc, 1, 1, 0, 1, true, false, false, false))
        } else {
            Shortcut::Identity
        };
        Exec::Block { expand, dw, project, shortcut }
    }
}

impl<T: Scalar> Network<T> {
    /// Instantiates the spec with seeded fan-in-scaled normal weights. When the
    /// head is residual, the final layer starts at zero so the untrained
    /// network is the identity on its centre slice.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { params: Vec::new(), rng: &mut rng };
        let mut exec = Vec::with_capacity(spec.layers.len());
        let last = spec.layers.len().saturating_sub(1);
        for (i, layer) in spec.layers.iter().enumerate() {
            let zero_last = i == last && spec.head == Head::ResidualCenter;
            let n = layer.name.as_str();
            let e = match &layer.kind {
                LayerKind::Conv { ic, oc, k, stride, pad, bn, relu, bias } => {
                    Exec::Unit(b.conv(n, *ic, *oc, *k, *stride, *pad, 1, *bn, *relu, *bias, zero_last))
                }
                LayerKind::Conv3d { ic, oc, k, stride, pad, bn, relu } => {
                    let weight = b.weight(n, &[*oc, *ic, k[0], k[1], k[2]], ic * k[0] * k[1] * k[2], zero_last);
                    let bn = bn.then(|| b.bn(n, *oc));
                    Exec::Unit(Unit { op: UnitOp::Conv3d { stride: *stride, pad: *pad }, weight, bias: None, bn, relu: *relu })
                }
                LayerKind::SqueezeDepth => Exec::Squeeze,
                LayerKind::Block(bs) => {
                    bs.validate()?;
                    b.block(n, bs)
                }
                LayerKind::TransConv { ic, oc } => {
                    let weight = b.weight(n, &[*ic, *oc, 2, 2], *ic, false);
                    let bn = Some(b.bn(n, *oc));
                    Exec::Unit(Unit { op: UnitOp::Up2, weight, bias: None, bn, relu: true })
                }
            };
            exec.push(e);
        }
        let params = b.params;
        Ok(Self { spec, params, exec })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Number of learnable scalars.
    pub fn num_learnable(&self) -> usize {
        self.params.iter().filter(|p| p.role.learnable()).map(|p| p.tensor.len()).sum()
    }

    /// Creates graph leaves for the learnable parameters.
    ///
    /// `grad` requests parameter gradients; `train_bn` selects batch
    /// statistics over running statistics.
    pub fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> Bound<T> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                p.role.learnable().then(|| {
                    let mut t = p.tensor.clone();
                    t.requires_grad = grad;
                    g.leaf(t)
                })
            })
            .collect();
        Bound { vars, observed: Vec::new(), train_bn }
    }

    fn run_unit(&self, g: &mut Graph<T>, b: &mut Bound<T>, u: &Unit, x: Var) -> Result<Var> {
        let w = b.vars[u.weight].expect("weights are bound");
        let mut y = match u.op {
            UnitOp::Conv2d { stride, pad, groups } => g.conv2d_grouped(x, w, stride, pad, groups)?,
            UnitOp::Conv3d { stride, pad } => g.conv3d(x, w, stride, pad)?,
            UnitOp::Up2 => g.conv_transpose2d(x, w)?,
        };
        if let Some(bi) = u.bias {
            y = g.bias_add(y, b.vars[bi].expect("bias is bound"))?;
        }
        if let Some(bn) = u.bn {
            let gamma = b.vars[bn.gamma].expect("bn is bound");
            let beta = b.vars[bn.beta].expect("bn is bound");
            let eps = T::c(BN_EPS);
            if b.train_bn {
                let (v, stats) = g.batch_norm(y, gamma, beta, BnMode::Train { eps })?;
                b.observed.push((bn.mean, bn.var, stats.expect("train mode reports stats")));
                y = v;
            } else {
                let mode = BnMode::Eval {
                    mean: self.params[bn.mean].tensor.data(),
                    var: self.params[bn.var].tensor.data(),
                    eps,
                };
                y = g.batch_norm(y, gamma, beta, mode)?.0;
            }
        }
        if u.relu {
            y = g.relu(y)?;
        }
        Ok(y)
    }

    /// Runs the network on a batch `[N, ...input_dims]`.
    pub fn forward(&self, g: &mut Graph<T>, b: &mut Bound<T>, x: Var) -> Result<Var> {
        let d = g.dims(x).to_vec();
        if d.len() != self.spec.input_dims.len() + 1 || d[1..] != self.spec.input_dims[..] {
            return shape_err(format!(
                "{} expects [N, {:?}], got {d:?}",
                self.spec.name, self.spec.input_dims
            ));
        }
        let mut outs: Vec<Var> = Vec::with_capacity(self.exec.len());
        for (i, (layer, e)) in self.spec.layers.iter().zip(&self.exec).enumerate() {
            let prev = if i == 0 { x } else { outs[i - 1] };
            let input = match layer.concat_from {
                Some(j) => g.concat_channels(&[prev, outs[j]])?,
                None => prev,
            };
            let y = match e {
                Exec::Unit(u) => self.run_unit(g, b, u, input)?,
                Exec::Squeeze => {
                    let d = g.dims(input).to_vec();
                    if d.len() != 5 || d[2] != 1 {
                        return shape_err(format!("squeeze expects depth 1, got {d:?}"));
                    }
                    g.reshape(input, &[d[0], d[1], d[3], d[4]])?
                }
                Exec::Block { expand, dw, project, shortcut } => {
                    let h = self.run_unit(g, b, expand, input)?;
                    let h = self.run_unit(g, b, dw, h)?;
                    let h = self.run_unit(g, b, project, h)?;
                    match shortcut {
                        Shortcut::None => h,
                        Shortcut::Identity => g.add(h, input)?,
                        Shortcut::Projection(u) => {
                            let s = self.run_unit(g, b, u, input)?;
                            g.add(h, s)?
                        }
                    }
                }
            };
            outs.push(y);
        }
        let Some(&out) = outs.last() else {
            return Ok(x);
        };
        match self.spec.head {
            Head::Identity => Ok(out),
            Head::SigmoidMean => {
                let s = g.sigmoid(out)?;
                g.mean_per_sample(s)
            }
            Head::ResidualCenter => {
                let center = center_slice(g, x)?;
                g.add(out, center)
            }
        }
    }

    /// Folds the batch statistics observed during `b`'s forward passes into
    /// the running statistics.
    pub fn commit_stats(&mut self, b: &Bound<T>) {
        let m = T::c(BN_MOMENTUM);
        for (mi, vi, stats) in &b.observed {
            for (r, &s) in self.params[*mi].tensor.data_mut().iter_mut().zip(&stats.mean) {
                *r = (T::one() - m) * *r + m * s;
            }
            for (r, &s) in self.params[*vi].tensor.data_mut().iter_mut().zip(&stats.var) {
                *r = (T::one() - m) * *r + m * s;
            }
        }
    }

    /// Gradients aligned with [`Network::params`] (None for buffers or
    /// parameters that did not reach the loss).
    pub fn grads(&self, b: &Bound<T>, grads: &Gradients<T>) -> Vec<Option<Vec<T>>> {
        b.vars.iter().map(|v| v.and_then(|v| grads.get(v).map(|g| g.to_vec()))).collect()
    }

    /// Replaces a parameter tensor by name.
    pub fn set_param(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        let Some(p) = self.params.iter_mut().find(|p| p.name == name) else {
            return arg_err(format!("{}: no parameter named {name}", self.spec.name));
        };
        if p.tensor.dims() != t.dims() {
            return shape_err(format!("{name}: expected {:?}, got {:?}", p.tensor.dims(), t.dims()));
        }
        p.tensor = t;
        Ok(())
    }

    /// Inference on a constant batch with running statistics.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let mut b = self.bind(&mut g, false, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &mut b, xv)?;
        Ok(g.value(y).clone())
    }
}

/// Centre slice of `[N, 1, H, W]` (itself) or `[N, 1, D, H, W]` (depth D/2).
pub fn center_slice<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let d = g.dims(x).to_vec();
    match d.len() {
        4 => Ok(x),
        5 if d[1] == 1 => {
            let flat = g.reshape(x, &[d[0], d[2], d[3], d[4]])?;
            g.narrow_channels(flat, d[2] / 2, 1)
        }
        _ => shape_err(format!("no centre slice for {d:?}")),
    }
}

/// Stacks `[N, 1, H, W]` slices along a new depth axis: `[N, 1, k, H, W]`.
pub fn stack_depth<T: Scalar>(g: &mut Graph<T>, slices: &[Var]) -> Result<Var> {
    let cat = g.concat_channels(slices)?;
    let d = g.dims(cat).to_vec();
    if d.len() != 4 {
        return shape_err(format!("stack_depth expects [N, 1, H, W] slices, got {d:?}"));
    }
    g.reshape(cat, &[d[0], 1, d[1], d[2], d[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_block, build_discriminator, build_lae, ScaleProfile};

    #[test]
    fn block_param_count_by_hand() {
        let spec = build_block(BlockSpec { ic: 32, oc: 32, stride: 1, exp: 6, concat_extra: None }, (8, 8)).unwrap();
        let net = Network::<f64>::new(spec, 0).unwrap();
        // 32*192 + 192*9 + 192*32 + 2*(192 + 192 + 32)
        assert_eq!(net.num_learnable(), 14_848);
    }

    #[test]
    fn strided_block_halves_and_doubles() {
        let spec = build_block(BlockSpec { ic: 16, oc: 32, stride: 2, exp: 6, concat_extra: None }, (8, 8)).unwrap();
        let net = Network::<f64>::new(spec, 1).unwrap();
        assert!(!net.params().iter().any(|p| p.name.contains("shortcut")));
        let x = Tensor::from_fn(&[2, 16, 8, 8], |i| ((i * 7919) % 101) as f64 / 101.0);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.dims(), &[2, 32, 4, 4]);
    }

    #[test]
    fn identity_shaped_block_keeps_dims() {
        let spec = build_block(BlockSpec { ic: 16, oc: 16, stride: 1, exp: 1, concat_extra: None }, (8, 8)).unwrap();
        let net = Network::<f64>::new(spec, 2).unwrap();
        let x = Tensor::from_fn(&[1, 16, 8, 8], |i| (i % 13) as f64 / 13.0);
        assert_eq!(net.infer(&x).unwrap().dims(), x.dims());
    }

    #[test]
    fn lae_runs_end_to_end_at_quarter_width() {
        let p = ScaleProfile::new(0.25, (64, 64)).unwrap();
        let net = Network::<f32>::new(build_lae(&p).unwrap(), 3).unwrap();
        let x = Tensor::from_fn(&[1, 1, 64, 64], |i| (i % 64) as f32 / 64.0);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.dims(), &[1, 1, 64, 64]);
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn discriminator_is_a_probability() {
        let p = ScaleProfile::new(0.25, (32, 32)).unwrap();
        let d = Network::<f64>::new(build_discriminator(&p).unwrap(), 4).unwrap();
        let x = Tensor::from_fn(&[3, 1, 32, 32], |i| (i % 17) as f64 / 17.0);
        let mut g = Graph::new();
        let mut b = d.bind(&mut g, false, true);
        let xv = g.constant(x);
        let out = d.forward(&mut g, &mut b, xv).unwrap();
        let v = g.value(out);
        assert_eq!(v.dims(), &[3]);
        assert!(v.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn running_stats_move_towards_batch_stats() {
        let p = ScaleProfile::new(0.25, (32, 32)).unwrap();
        let mut d = Network::<f64>::new(build_discriminator(&p).unwrap(), 4).unwrap();
        let x = Tensor::from_fn(&[2, 1, 32, 32], |i| 3.0 + (i % 5) as f64);
        let mut g = Graph::new();
        let mut b = d.bind(&mut g, false, true);
        let xv = g.constant(x);
        d.forward(&mut g, &mut b, xv).unwrap();
        d.commit_stats(&b);
        let rm = d.params().iter().find(|p| p.name == "conv1.bn.running_mean").unwrap();
        assert!(rm.tensor.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let p = ScaleProfile::new(0.25, (32, 32)).unwrap();
        let net = Network::<f64>::new(build_lae(&p).unwrap(), 0).unwrap();
        assert!(net.infer(&Tensor::zeros(&[1, 1, 16, 32])).is_err());
    }
}

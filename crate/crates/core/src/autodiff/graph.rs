//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied to its nodes in creation order.
//! Node indices are therefore already a topological order and the backward
//! sweep simply walks them in reverse.

use super::kernels::{self, BatchStats, ChannelLayout, Conv2dGeom, Conv3dGeom, UpGeom};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Batch-norm evaluation mode.
#[derive(Debug, Clone)]
pub enum BnMode<'a, T> {
    /// Normalise with batch statistics.
    Train { eps: T },
    /// Normalise with stored running statistics.
    Eval { mean: &'a [T], var: &'a [T], eps: T },
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct ObservedStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, the quantity tracked by running statistics.
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, geom: Conv2dGeom },
    Up2 { x: Var, w: Var, geom: UpGeom },
    Conv3d { x: Var, w: Var, geom: Conv3dGeom },
    BiasAdd { x: Var, b: Var, layout: ChannelLayout },
    /// Shared by train and eval modes: `y = gamma * xhat + beta`.
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, layout: ChannelLayout, train: bool },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, c: T },
    Shift { x: Var },
    Concat { parts: Vec<(Var, usize)>, n: usize, s: usize },
    Narrow { x: Var, start: usize, len: usize, c: usize, n: usize, s: usize },
    Reshape { x: Var },
    Sum { x: Var },
    MeanPerSample { x: Var, n: usize },
    Mse { pred: Var, target: Var },
    Tv { x: Var, h: usize, w: usize },
    WeightedSum { terms: Vec<(Var, T)> },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input. Gradients are tracked when `t.requires_grad` is set.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad;
        t.grad = None;
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, dims: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var], what: &str) -> Result<Var> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let mut value = Tensor::new(dims, data)?;
        value.requires_grad = needs_grad;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Standard (groups = 1) cross-correlation with zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        self.conv2d_grouped(x, w, stride, pad, 1)
    }

    /// One filter per input channel; weight `[C, 1, k, k]`.
    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let c = self.dims(x).get(1).copied().unwrap_or(0);
        if self.dims(w).first() != Some(&c) {
            return shape_err(format!(
                "depthwise weight {:?} does not match {c} input channels",
                self.dims(w)
            ));
        }
        self.conv2d_grouped(x, w, stride, pad, c.max(1))
    }

    pub fn conv2d_grouped(&mut self, x: Var, w: Var, stride: usize, pad: usize, groups: usize) -> Result<Var> {
        let geom = Conv2dGeom::new(self.dims(x), self.dims(w), stride, pad, groups)?;
        let out = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        self.push(&geom.out_dims(), out, Op::Conv2d { x, w, geom }, &[x, w], "conv2d")
    }

    /// Depthwise `k x k` filtering followed by a `1 x 1` channel mixer.
    pub fn depthwise_separable_conv2d(&mut self, x: Var, dw: Var, pw: Var, stride: usize, pad: usize) -> Result<Var> {
        let h = self.depthwise_conv2d(x, dw, stride, pad)?;
        let c = self.dims(x)[1];
        let pwd = self.dims(pw);
        if pwd.len() != 4 || pwd[1] != c || pwd[2] != 1 || pwd[3] != 1 {
            return shape_err(format!("pointwise weight {pwd:?} must be [O, {c}, 1, 1]"));
        }
        self.conv2d(h, pw, 1, 0)
    }

    /// Kernel-2, stride-2 transposed convolution (exact adjoint of the
    /// matching strided convolution); weight `[C, O, 2, 2]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var) -> Result<Var> {
        let geom = UpGeom::new(self.dims(x), self.dims(w))?;
        let out = kernels::up2_forward(self.value(x).data(), self.value(w).data(), &geom);
        self.push(&geom.out_dims(), out, Op::Up2 { x, w, geom }, &[x, w], "conv_transpose2d")
    }

    pub fn conv3d(&mut self, x: Var, w: Var, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let geom = Conv3dGeom::new(self.dims(x), self.dims(w), stride, pad)?;
        let out = kernels::conv3d_forward(self.value(x).data(), self.value(w).data(), &geom);
        self.push(&geom.out_dims(), out, Op::Conv3d { x, w, geom }, &[x, w], "conv3d")
    }

    /// Adds a per-channel bias along axis 1.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let layout = ChannelLayout::of(self.dims(x))?;
        if self.value(b).len() != layout.c {
            return shape_err(format!("bias of length {} for {} channels", self.value(b).len(), layout.c));
        }
        let mut out = self.value(x).data().to_vec();
        let bias = self.value(b).data();
        for ch in 0..layout.c {
            for r in layout.for_channel(ch) {
                out[r].iter_mut().for_each(|v| *v += bias[ch]);
            }
        }
        let dims = self.dims(x).to_vec();
        self.push(&dims, out, Op::BiasAdd { x, b, layout }, &[x, b], "bias_add")
    }

    /// Batch normalisation over every axis but the channel axis (1).
    /// Training mode also returns the observed batch statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
    ) -> Result<(Var, Option<ObservedStats<T>>)> {
        let layout = ChannelLayout::of(self.dims(x))?;
        if self.value(gamma).len() != layout.c || self.value(beta).len() != layout.c {
            return shape_err(format!(
                "batch norm affine params ({}, {}) for {} channels",
                self.value(gamma).len(),
                self.value(beta).len(),
                layout.c
            ));
        }
        let dims = self.dims(x).to_vec();
        match mode {
            BnMode::Train { eps } => {
                let BatchStats { y, xhat, inv_std, mean, var } = kernels::batch_norm_train(
                    self.value(x).data(),
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    &layout,
                    eps,
                );
                let m = layout.count();
                let correction = if m > 1 { T::c(m as f64 / (m - 1) as f64) } else { T::one() };
                let stats = ObservedStats { mean, var: var.into_iter().map(|v| v * correction).collect() };
                let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, layout, train: true };
                let v = self.push(&dims, y, op, &[x, gamma, beta], "batch_norm")?;
                Ok((v, Some(stats)))
            }
            BnMode::Eval { mean, var, eps } => {
                if mean.len() != layout.c || var.len() != layout.c {
                    return shape_err("running statistics length differs from channel count");
                }
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let xv = self.value(x).data();
                let g = self.value(gamma).data();
                let b = self.value(beta).data();
                let mut xhat = vec![T::zero(); xv.len()];
                let mut y = vec![T::zero(); xv.len()];
                for ch in 0..layout.c {
                    for r in layout.for_channel(ch) {
                        for i in r {
                            xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
                            y[i] = g[ch] * xhat[i] + b[ch];
                        }
                    }
                }
                let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, layout, train: false };
                Ok((self.push(&dims, y, op, &[x, gamma, beta], "batch_norm")?, None))
            }
        }
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).data().iter().map(|&v| v.max(T::zero())).collect();
        let dims = self.dims(x).to_vec();
        self.push(&dims, out, Op::Relu { x }, &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self
            .value(x)
            .data()
            .iter()
            .map(|&v| {
                // split by sign so neither branch overflows
                if v >= T::zero() {
                    T::one() / (T::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (T::one() + e)
                }
            })
            .collect();
        let dims = self.dims(x).to_vec();
        self.push(&dims, out, Op::Sigmoid { x }, &[x], "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return shape_err(format!("add of {:?} and {:?}", self.dims(a), self.dims(b)));
        }
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p + q).collect();
        let dims = self.dims(a).to_vec();
        self.push(&dims, out, Op::Add { a, b }, &[a, b], "add")
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).data().iter().map(|&v| v * c).collect();
        let dims = self.dims(x).to_vec();
        self.push(&dims, out, Op::Scale { x, c }, &[x], "scale")
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).data().iter().map(|&v| v + c).collect();
        let dims = self.dims(x).to_vec();
        self.push(&dims, out, Op::Shift { x }, &[x], "add_scalar")
    }

    /// Concatenates along the channel axis; all other dims must agree.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of zero tensors");
        };
        let d0 = self.dims(first).to_vec();
        if d0.len() < 2 {
            return shape_err("concat needs [N, C, ...] tensors");
        }
        let n = d0[0];
        let s: usize = d0[2..].iter().product();
        let mut chans = Vec::with_capacity(parts.len());
        for &p in parts {
            let d = self.dims(p);
            if d.len() != d0.len() || d[0] != n || d[2..] != d0[2..] {
                return shape_err(format!("concat of {d0:?} and {d:?}"));
            }
            chans.push((p, d[1]));
        }
        let c_total: usize = chans.iter().map(|&(_, c)| c).sum();
        let mut out = Vec::with_capacity(n * c_total * s);
        for ni in 0..n {
            for &(p, c) in &chans {
                out.extend_from_slice(&self.value(p).data()[ni * c * s..(ni + 1) * c * s]);
            }
        }
        let mut dims = d0.clone();
        dims[1] = c_total;
        self.push(&dims, out, Op::Concat { parts: chans, n, s }, parts, "concat")
    }

    /// Channels `start..start + len` of `x`.
    pub fn narrow_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let d = self.dims(x).to_vec();
        if d.len() < 2 || len == 0 || start + len > d[1] {
            return shape_err(format!("narrow {start}+{len} of {d:?}"));
        }
        let (n, c) = (d[0], d[1]);
        let s: usize = d[2..].iter().product();
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * len * s);
        for ni in 0..n {
            out.extend_from_slice(&xv[(ni * c + start) * s..(ni * c + start + len) * s]);
        }
        let mut dims = d.clone();
        dims[1] = len;
        self.push(&dims, out, Op::Narrow { x, start, len, c, n, s }, &[x], "narrow")
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let n: usize = dims.iter().product();
        if n != self.value(x).len() {
            return shape_err(format!("reshape {:?} to {dims:?}", self.dims(x)));
        }
        let out = self.value(x).data().to_vec();
        self.push(dims, out, Op::Reshape { x }, &[x], "reshape")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(&[1], vec![s], Op::Sum { x }, &[x], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum(x)?;
        self.scale(s, T::one() / T::c(n as f64))
    }

    /// Mean over every axis except the leading batch axis; output `[N]`.
    pub fn mean_per_sample(&mut self, x: Var) -> Result<Var> {
        let d = self.dims(x).to_vec();
        let n = d[0];
        let per = self.value(x).len() / n;
        let xv = self.value(x).data();
        let out = (0..n)
            .map(|i| xv[i * per..(i + 1) * per].iter().copied().sum::<T>() / T::c(per as f64))
            .collect();
        self.push(&[n], out, Op::MeanPerSample { x, n }, &[x], "mean_per_sample")
    }

    /// Mean squared error over all elements, scalar output.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.dims(pred) != self.dims(target) {
            return shape_err(format!("mse of {:?} and {:?}", self.dims(pred), self.dims(target)));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let s: T = p.iter().zip(t).map(|(&a, &b)| (b - a) * (b - a)).sum();
        let v = s / T::c(p.len() as f64);
        self.push(&[1], vec![v], Op::Mse { pred, target }, &[pred, target], "mse")
    }

    /// Isotropic total variation with forward differences, averaged per
    /// pixel and over all leading (batch, channel) planes.
    pub fn total_variation(&mut self, x: Var) -> Result<Var> {
        let d = self.dims(x).to_vec();
        if d.len() < 2 {
            return shape_err("total variation needs at least 2 dims");
        }
        let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
        if h < 2 || w < 2 {
            return shape_err(format!("total variation needs H, W >= 2, got {h}x{w}"));
        }
        let xv = self.value(x).data();
        let planes = xv.len() / (h * w);
        let mut acc = T::zero();
        for p in 0..planes {
            let img = &xv[p * h * w..(p + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    let (dx, dy) = fwd_diff(img, w, h, i, j);
                    acc += (dx * dx + dy * dy).sqrt();
                }
            }
        }
        let v = acc / T::c((planes * h * w) as f64);
        self.push(&[1], vec![v], Op::Tv { x, h, w }, &[x], "total_variation")
    }

    /// `sum_i c_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut s = T::zero();
        for &(v, c) in terms {
            if self.value(v).len() != 1 {
                return shape_err("weighted_sum expects scalar terms");
            }
            s += c * self.value(v).data()[0];
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(&[1], vec![s], Op::WeightedSum { terms: terms.to_vec() }, &inputs, "weighted_sum")
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return shape_err(format!("backward needs a scalar, got {:?}", self.dims(loss)));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let want = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, geom } => {
                let (gx, gw) = kernels::conv2d_backward(val(*x), val(*w), g, geom);
                accumulate(grads, *x, gx, want(*x));
                accumulate(grads, *w, gw, want(*w));
            }
            Op::Up2 { x, w, geom } => {
                let (gx, gw) = kernels::up2_backward(val(*x), val(*w), g, geom);
                accumulate(grads, *x, gx, want(*x));
                accumulate(grads, *w, gw, want(*w));
            }
            Op::Conv3d { x, w, geom } => {
                let (gx, gw) = kernels::conv3d_backward(val(*x), val(*w), g, geom);
                accumulate(grads, *x, gx, want(*x));
                accumulate(grads, *w, gw, want(*w));
            }
            Op::BiasAdd { x, b, layout } => {
                if want(*b) {
                    let gb = (0..layout.c)
                        .map(|ch| layout.for_channel(ch).map(|r| g[r].iter().copied().sum::<T>()).sum())
                        .collect();
                    accumulate(grads, *b, gb, true);
                }
                accumulate(grads, *x, g.to_vec(), want(*x));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, layout, train } => {
                let gm = val(*gamma);
                if *train {
                    let (gx, gg, gb) = kernels::batch_norm_train_backward(g, xhat, inv_std, gm, layout);
                    accumulate(grads, *x, gx, want(*x));
                    accumulate(grads, *gamma, gg, want(*gamma));
                    accumulate(grads, *beta, gb, want(*beta));
                } else {
                    let mut gx = vec![T::zero(); g.len()];
                    let mut gg = vec![T::zero(); layout.c];
                    let mut gb = vec![T::zero(); layout.c];
                    for ch in 0..layout.c {
                        for r in layout.for_channel(ch) {
                            for i in r {
                                gx[i] = g[i] * gm[ch] * inv_std[ch];
                                gg[ch] += g[i] * xhat[i];
                                gb[ch] += g[i];
                            }
                        }
                    }
                    accumulate(grads, *x, gx, want(*x));
                    accumulate(grads, *gamma, gg, want(*gamma));
                    accumulate(grads, *beta, gb, want(*beta));
                }
            }
            Op::Relu { x } => {
                let gx = val(*x).iter().zip(g).map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() }).collect();
                accumulate(grads, *x, gx, true);
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let gx = y.iter().zip(g).map(|(&s, &gv)| gv * s * (T::one() - s)).collect();
                accumulate(grads, *x, gx, true);
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.to_vec(), want(*a));
                accumulate(grads, *b, g.to_vec(), want(*b));
            }
            Op::Scale { x, c } => {
                accumulate(grads, *x, g.iter().map(|&v| v * *c).collect(), true);
            }
            Op::Shift { x } | Op::Reshape { x } => {
                accumulate(grads, *x, g.to_vec(), true);
            }
            Op::Concat { parts, n, s } => {
                let c_total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(p, c) in parts {
                    if want(p) {
                        let mut gp = Vec::with_capacity(n * c * s);
                        for ni in 0..*n {
                            let base = (ni * c_total + offset) * s;
                            gp.extend_from_slice(&g[base..base + c * s]);
                        }
                        accumulate(grads, p, gp, true);
                    }
                    offset += c;
                }
            }
            Op::Narrow { x, start, len, c, n, s } => {
                let mut gx = vec![T::zero(); n * c * s];
                for ni in 0..*n {
                    gx[(ni * c + start) * s..(ni * c + start + len) * s]
                        .copy_from_slice(&g[ni * len * s..(ni + 1) * len * s]);
                }
                accumulate(grads, *x, gx, true);
            }
            Op::Sum { x } => {
                accumulate(grads, *x, vec![g[0]; val(*x).len()], true);
            }
            Op::MeanPerSample { x, n } => {
                let per = val(*x).len() / n;
                let inv = T::one() / T::c(per as f64);
                let gx = (0..val(*x).len()).map(|i| g[i / per] * inv).collect();
                accumulate(grads, *x, gx, true);
            }
            Op::Mse { pred, target } => {
                let p = val(*pred);
                let t = val(*target);
                let k = T::c(2.0) * g[0] / T::c(p.len() as f64);
                if want(*pred) {
                    accumulate(grads, *pred, p.iter().zip(t).map(|(&a, &b)| k * (a - b)).collect(), true);
                }
                if want(*target) {
                    accumulate(grads, *target, p.iter().zip(t).map(|(&a, &b)| k * (b - a)).collect(), true);
                }
            }
            Op::Tv { x, h, w } => {
                let (h, w) = (*h, *w);
                let xv = val(*x);
                let planes = xv.len() / (h * w);
                let k = g[0] / T::c((planes * h * w) as f64);
                let mut gx = vec![T::zero(); xv.len()];
                for p in 0..planes {
                    let img = &xv[p * h * w..(p + 1) * h * w];
                    let gi = &mut gx[p * h * w..(p + 1) * h * w];
                    for i in 0..h {
                        for j in 0..w {
                            let (dx, dy) = fwd_diff(img, w, h, i, j);
                            let r = (dx * dx + dy * dy).sqrt();
                            if r <= T::zero() {
                                continue;
                            }
                            let (ux, uy) = (k * dx / r, k * dy / r);
                            gi[i * w + j] -= ux + uy;
                            if j + 1 < w {
                                gi[i * w + j + 1] += ux;
                            }
                            if i + 1 < h {
                                gi[(i + 1) * w + j] += uy;
                            }
                        }
                    }
                }
                accumulate(grads, *x, gx, true);
            }
            Op::WeightedSum { terms } => {
                for &(v, c) in terms {
                    accumulate(grads, v, vec![c * g[0]], want(v));
                }
            }
        }
    }
}

#[inline]
fn fwd_diff<T: Scalar>(img: &[T], w: usize, h: usize, i: usize, j: usize) -> (T, T) {
    let v = img[i * w + j];
    let dx = if j + 1 < w { img[i * w + j + 1] - v } else { T::zero() };
    let dy = if i + 1 < h { img[(i + 1) * w + j] - v } else { T::zero() };
    (dx, dy)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>, wanted: bool) {
    if !wanted {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf (or `None` when it did not influence the loss).
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

//! Eager, gradient-free forms of the primitives for one-off evaluation.

use super::{Activation, BnMode, Graph, Var, BN_EPS};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn run<T: Scalar>(inputs: &[&Tensor<T>], f: impl FnOnce(&mut Graph<T>, &[Var]) -> Result<Var>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant((*t).clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).clone())
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    run(&[x, w], |g, v| g.conv2d(v[0], v[1], stride, pad))
}

pub fn depthwise_separable_conv2d<T: Scalar>(
    x: &Tensor<T>,
    dw: &Tensor<T>,
    pw: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    run(&[x, dw, pw], |g, v| g.depthwise_separable_conv2d(v[0], v[1], v[2], stride, pad))
}

pub fn transposed_conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    run(&[x, w], |g, v| g.conv_transpose2d(v[0], v[1]))
}

pub fn conv3d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor<T>> {
    run(&[x, w], |g, v| g.conv3d(v[0], v[1], stride, pad))
}

/// Training-mode batch norm (batch statistics).
pub fn batch_norm<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
    run(&[x, gamma, beta], |g, v| Ok(g.batch_norm(v[0], v[1], v[2], BnMode::Train { eps: T::c(BN_EPS) })?.0))
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    run(&[x], |g, v| g.activation(v[0], kind))
}

//! Two-step multi-slice restoration cascade and its single-block ablation.

use super::network::{stack_depth, Bound, Network};
use super::spec::{build_lsaae, build_sib, LsAaeSpec, ScaleProfile};
use crate::autodiff::{Graph, Var};
use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Step one applies one shared block to the three overlapping triplets of the
/// five input slices; step two fuses the three intermediate estimates.
#[derive(Debug, Clone)]
pub struct LsAae<T: Scalar> {
    pub step1: Network<T>,
    pub step2: Network<T>,
}

pub struct CascadeOutput {
    /// Step-one estimates of slices i-1, i, i+1.
    pub intermediate: [Var; 3],
    pub output: Var,
}

pub struct CascadeBindings<T: Scalar> {
    pub step1: Bound<T>,
    pub step2: Bound<T>,
}

fn check_slices<T: Scalar>(g: &Graph<T>, slices: &[Var], want: usize) -> Result<()> {
    if slices.len() != want {
        return arg_err(format!("expected {want} slices, got {}", slices.len()));
    }
    let d0 = g.dims(slices[0]).to_vec();
    if d0.len() != 4 || d0[1] != 1 {
        return shape_err(format!("slices must be [N, 1, H, W], got {d0:?}"));
    }
    if slices.iter().any(|&s| g.dims(s) != d0.as_slice()) {
        return shape_err("slices have mismatched dims");
    }
    Ok(())
}

impl<T: Scalar> LsAae<T> {
    pub fn new(spec: LsAaeSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            step1: Network::new(spec.step1, seed)?,
            step2: Network::new(spec.step2, seed.wrapping_add(0x9e37_79b9))?,
        })
    }

    pub fn build(profile: &ScaleProfile, seed: u64) -> Result<Self> {
        Self::new(build_lsaae(profile)?, seed)
    }

    pub fn num_learnable(&self) -> usize {
        self.step1.num_learnable() + self.step2.num_learnable()
    }

    pub fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> CascadeBindings<T> {
        CascadeBindings { step1: self.step1.bind(g, grad, train_bn), step2: self.step2.bind(g, grad, train_bn) }
    }

    /// `slices`: five `[N, 1, H, W]` nodes ordered i-2 .. i+2.
    pub fn forward(&self, g: &mut Graph<T>, b: &mut CascadeBindings<T>, slices: &[Var]) -> Result<CascadeOutput> {
        check_slices(g, slices, 5)?;
        let mut mid = [slices[0]; 3];
        for (k, m) in mid.iter_mut().enumerate() {
            let triplet = stack_depth(g, &slices[k..k + 3])?;
            *m = self.step1.forward(g, &mut b.step1, triplet)?;
        }
        let fused = stack_depth(g, &mid)?;
        let output = self.step2.forward(g, &mut b.step2, fused)?;
        Ok(CascadeOutput { intermediate: mid, output })
    }

    pub fn commit_stats(&mut self, b: &CascadeBindings<T>) {
        self.step1.commit_stats(&b.step1);
        self.step2.commit_stats(&b.step2);
    }

    /// Inference on five constant `[N, 1, H, W]` tensors.
    pub fn infer(&self, slices: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let mut b = self.bind(&mut g, false, false);
        let vars: Vec<Var> = slices.iter().map(|s| g.constant(s.clone())).collect();
        let out = self.forward(&mut g, &mut b, &vars)?;
        Ok(g.value(out.output).clone())
    }
}

/// Single inpainting block over all five slices.
#[derive(Debug, Clone)]
pub struct Sib<T: Scalar> {
    pub block: Network<T>,
}

impl<T: Scalar> Sib<T> {
    pub fn build(profile: &ScaleProfile, seed: u64) -> Result<Self> {
        Ok(Self { block: Network::new(build_sib(profile)?, seed)? })
    }

    pub fn num_learnable(&self) -> usize {
        self.block.num_learnable()
    }

    pub fn forward(&self, g: &mut Graph<T>, b: &mut Bound<T>, slices: &[Var]) -> Result<Var> {
        check_slices(g, slices, 5)?;
        let stacked = stack_depth(g, slices)?;
        self.block.forward(g, b, stacked)
    }

    pub fn infer(&self, slices: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let mut b = self.block.bind(&mut g, false, false);
        let vars: Vec<Var> = slices.iter().map(|s| g.constant(s.clone())).collect();
        let out = self.forward(&mut g, &mut b, &vars)?;
        Ok(g.value(out).clone())
    }
}

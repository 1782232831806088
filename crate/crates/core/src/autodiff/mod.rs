//! Dense tensors with reverse-mode automatic differentiation.

pub mod gradcheck;
mod graph;
pub mod kernels;
pub mod ops;
pub mod suite;

pub use gradcheck::grad_check;
pub use graph::{Activation, BnMode, Gradients, Graph, ObservedStats, Var};

/// Batch-norm epsilon used throughout the networks.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.1;

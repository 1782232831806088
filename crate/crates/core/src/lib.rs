//! Sparse-view CT restoration toolkit.

pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod cost;
pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type LsAae32 = nn::LsAae<f32>;
pub type LsAae64 = nn::LsAae<f64>;
pub type ImageSlice32 = data::ImageSlice<f32>;
pub type ImageSlice64 = data::ImageSlice<f64>;
pub type Sinogram32 = geometry::Sinogram<f32>;
pub type Sinogram64 = geometry::Sinogram<f64>;

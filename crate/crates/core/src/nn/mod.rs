//! Network architectures: inverted-residual blocks, the lightweight
//! autoencoder, its discriminator and the multi-slice cascade.

pub mod archive;
pub mod cascade;
pub mod network;
pub mod spec;

pub use cascade::{LsAae, Sib};
pub use network::{Network, Param, ParamRole};
pub use spec::{
    build_block, build_discriminator, build_inpainting_block, build_lae, build_lae_residual, build_lsaae, build_sib,
    BlockSpec, Head, Layer, LayerKind, LsAaeSpec, NetworkSpec, ScaleProfile,
};

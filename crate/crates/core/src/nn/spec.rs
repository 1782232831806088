//! Declarative network descriptions and the builders for every architecture
//! in the toolkit: the lightweight autoencoder, its discriminator, the 3D-stem
//! inpainting block, the cascaded multi-slice model and the single-block
//! ablation.

use crate::error::{arg_err, Result};

/// Channel-width and resolution knob for desk-scale instantiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleProfile {
    pub width_mult: f64,
    pub input_hw: (usize, usize),
}

impl ScaleProfile {
    pub fn new(width_mult: f64, input_hw: (usize, usize)) -> Result<Self> {
        if !(width_mult > 0.0 && width_mult <= 1.0) {
            return arg_err(format!("width_mult must be in (0, 1], got {width_mult}"));
        }
        let (h, w) = input_hw;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return arg_err(format!("input {h}x{w} must be non-empty and divisible by 16"));
        }
        Ok(Self { width_mult, input_hw })
    }

    /// Full-scale profile on the 192 x 512 Radon-domain input.
    pub fn full() -> Self {
        Self { width_mult: 1.0, input_hw: (192, 512) }
    }

    /// Scaled channel count: nearest multiple of 4, at least 4. Single
    /// channels (image in/out, discriminator map) are never scaled.
    pub fn ch(&self, base: usize) -> usize {
        if base <= 1 {
            return base;
        }
        let scaled = (base as f64 * self.width_mult / 4.0).round() as usize * 4;
        scaled.max(4)
    }
}

/// Inverted residual block with linear bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub ic: usize,
    pub oc: usize,
    pub stride: usize,
    pub exp: usize,
    /// Skip-connection channels concatenated onto the input before the block.
    pub concat_extra: Option<usize>,
}

impl BlockSpec {
    pub fn in_channels(&self) -> usize {
        self.ic + self.concat_extra.unwrap_or(0)
    }

    pub fn hidden(&self) -> usize {
        self.in_channels() * self.exp
    }

    /// Residual shortcut exists iff the block keeps the resolution.
    pub fn has_shortcut(&self) -> bool {
        self.stride == 1
    }

    pub fn projection_shortcut(&self) -> bool {
        self.has_shortcut() && self.in_channels() != self.oc
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride != 1 && self.stride != 2 {
            return arg_err(format!("block stride must be 1 or 2, got {}", self.stride));
        }
        if self.exp == 0 || self.ic == 0 || self.oc == 0 {
            return arg_err("block channels and expansion factor must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// 2D convolution, optionally followed by batch norm and ReLU.
    Conv { ic: usize, oc: usize, k: usize, stride: usize, pad: usize, bn: bool, relu: bool, bias: bool },
    Conv3d { ic: usize, oc: usize, k: [usize; 3], stride: [usize; 3], pad: [usize; 3], bn: bool, relu: bool },
    /// `[N, C, 1, H, W] -> [N, C, H, W]`.
    SqueezeDepth,
    Block(BlockSpec),
    /// Kernel-2 stride-2 upsampling followed by batch norm and ReLU.
    TransConv { ic: usize, oc: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    /// Index of an earlier layer whose output is concatenated (channel axis)
    /// onto this layer's input.
    pub concat_from: Option<usize>,
}

impl Layer {
    fn new(name: &str, kind: LayerKind) -> Self {
        Self { name: name.to_string(), kind, concat_from: None }
    }

    fn concat(mut self, from: usize) -> Self {
        self.concat_from = Some(from);
        self
    }
}

/// Post-processing applied to the last layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Raw regression output.
    Identity,
    /// Adds the centre input slice (residual restoration).
    ResidualCenter,
    /// Element-wise sigmoid averaged per sample into a probability.
    SigmoidMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-sample input dims: `[C, H, W]` or `[C, D, H, W]`.
    pub input_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub head: Head,
}

impl NetworkSpec {
    pub fn empty(name: &str, input_dims: Vec<usize>) -> Self {
        Self { name: name.to_string(), input_dims, layers: Vec::new(), head: Head::Identity }
    }
}

/// Wraps a single block as a one-layer network (its executable subgraph).
pub fn build_block(spec: BlockSpec, hw: (usize, usize)) -> Result<NetworkSpec> {
    spec.validate()?;
    if spec.concat_extra.is_some() {
        return arg_err("a stand-alone block cannot take a skip connection");
    }
    Ok(NetworkSpec {
        name: "block".into(),
        input_dims: vec![spec.ic, hw.0, hw.1],
        layers: vec![Layer::new("block", LayerKind::Block(spec))],
        head: Head::Identity,
    })
}

fn block(name: &str, ic: usize, oc: usize, stride: usize, exp: usize) -> Layer {
    Layer::new(name, LayerKind::Block(BlockSpec { ic, oc, stride, exp, concat_extra: None }))
}

fn concat_block(name: &str, ic: usize, extra: usize, oc: usize, exp: usize, from: usize) -> Layer {
    Layer::new(name, LayerKind::Block(BlockSpec { ic, oc, stride: 1, exp, concat_extra: Some(extra) })).concat(from)
}

/// Stem variants feeding the shared encoder/decoder body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stem {
    /// Single 3x3 stride-2 convolution on one image.
    Conv2d,
    /// Two 3D convolutions collapsing `depth` slices to one feature map.
    /// `depth_stride` is the depth stride of the first convolution
    /// (1 for triplets, 2 for the five-slice single block).
    Conv3d { depth: usize, depth_stride: usize },
}

fn stem_layers(p: &ScaleProfile, stem: Stem) -> Vec<Layer> {
    let c1 = p.ch(32);
    match stem {
        Stem::Conv2d => vec![Layer::new(
            "conv1",
            LayerKind::Conv { ic: 1, oc: c1, k: 3, stride: 2, pad: 1, bn: true, relu: true, bias: false },
        )],
        Stem::Conv3d { depth_stride, .. } => vec![
            Layer::new(
                "conv1_1",
                LayerKind::Conv3d {
                    ic: 1,
                    oc: p.ch(16),
                    k: [3, 3, 3],
                    stride: [depth_stride, 2, 2],
                    pad: [1, 1, 1],
                    bn: true,
                    relu: true,
                },
            ),
            Layer::new(
                "conv1_2",
                LayerKind::Conv3d {
                    ic: p.ch(16),
                    oc: c1,
                    k: [3, 3, 3],
                    stride: [2, 1, 1],
                    pad: [0, 1, 1],
                    bn: true,
                    relu: true,
                },
            ),
            Layer::new("squeeze", LayerKind::SqueezeDepth),
        ],
    }
}

/// Encoder layers after the stem. Returns the layers and the indices of the
/// feature maps reused by the decoder skips: (block1, block2_2, block3_3).
fn encoder(p: &ScaleProfile, base: usize, last_two: (usize, usize)) -> (Vec<Layer>, [usize; 3]) {
    let c = |v| p.ch(v);
    let layers = vec![
        block("block1", c(32), c(16), 1, 1),
        block("block2_1", c(16), c(32), 2, 6),
        block("block2_2", c(32), c(32), 1, 6),
        block("block3_1", c(32), c(64), 2, 6),
        block("block3_2", c(64), c(64), 1, 6),
        block("block3_3", c(64), c(64), 1, 6),
        block("block4_1", c(64), c(128), 2, 6),
        block("block4_2", c(128), c(128), 1, 6),
        block("block4_3", c(128), last_two.0, 1, 6),
        block("block4_4", last_two.0, last_two.1, 1, 6),
    ];
    (layers, [base, base + 2, base + 5])
}

fn autoencoder(name: &str, p: &ScaleProfile, stem: Stem, head: Head) -> Result<NetworkSpec> {
    let (h, w) = p.input_hw;
    if h % 16 != 0 || w % 16 != 0 {
        return arg_err(format!("input {h}x{w} must be divisible by 16"));
    }
    let c = |v| p.ch(v);
    let mut layers = stem_layers(p, stem);
    let stem_out = layers.len() - 1;
    let (enc, [b1, b2, b3]) = encoder(p, layers.len(), (c(128), c(128)));
    layers.extend(enc);
    layers.push(Layer::new("trans_conv1", LayerKind::TransConv { ic: c(128), oc: c(64) }));
    // Listed with stride 2 in the reference table, but its input and output
    // sizes agree, so it runs at stride 1.
    layers.push(concat_block("block5_1", c(64), c(64), c(64), 3, b3));
    layers.push(block("block5_2", c(64), c(64), 1, 6));
    layers.push(block("block5_3", c(64), c(64), 1, 6));
    layers.push(Layer::new("trans_conv2", LayerKind::TransConv { ic: c(64), oc: c(32) }));
    layers.push(concat_block("block6_1", c(32), c(32), c(32), 3, b2));
    layers.push(block("block6_2", c(32), c(32), 1, 6));
    layers.push(Layer::new("trans_conv3", LayerKind::TransConv { ic: c(32), oc: c(16) }));
    layers.push(concat_block("block7", c(16), c(16), c(32), 1, b1));
    layers.push(concat_block("block8", c(32), c(32), c(32), 1, stem_out));
    layers.push(Layer::new("trans_conv4", LayerKind::TransConv { ic: c(32), oc: c(16) }));
    layers.push(Layer::new(
        "conv9",
        LayerKind::Conv { ic: c(16), oc: 1, k: 3, stride: 1, pad: 1, bn: false, relu: false, bias: true },
    ));
    let input_dims = match stem {
        Stem::Conv2d => vec![1, h, w],
        Stem::Conv3d { depth, .. } => vec![1, depth, h, w],
    };
    Ok(NetworkSpec { name: name.into(), input_dims, layers, head })
}

/// Lightweight autoencoder (encoder, decoder and skip connections).
pub fn build_lae(profile: &ScaleProfile) -> Result<NetworkSpec> {
    autoencoder("lae", profile, Stem::Conv2d, Head::Identity)
}

/// Autoencoder that restores a residual over its input image.
pub fn build_lae_residual(profile: &ScaleProfile) -> Result<NetworkSpec> {
    autoencoder("lae", profile, Stem::Conv2d, Head::ResidualCenter)
}

/// Encoder-shaped discriminator ending in a one-channel map, sigmoid and mean.
pub fn build_discriminator(profile: &ScaleProfile) -> Result<NetworkSpec> {
    let (h, w) = profile.input_hw;
    if h % 16 != 0 || w % 16 != 0 {
        return arg_err(format!("input {h}x{w} must be divisible by 16"));
    }
    let mut layers = stem_layers(profile, Stem::Conv2d);
    let (enc, _) = encoder(profile, layers.len(), (profile.ch(64), 1));
    layers.extend(enc);
    Ok(NetworkSpec { name: "discriminator".into(), input_dims: vec![1, h, w], layers, head: Head::SigmoidMean })
}

/// Inpainting block: the autoencoder with its 2D stem replaced by two 3D
/// convolutions over `depth` consecutive slices.
pub fn build_inpainting_block(profile: &ScaleProfile, depth: usize, depth_stride: usize) -> Result<NetworkSpec> {
    autoencoder("inpainting_block", profile, Stem::Conv3d { depth, depth_stride }, Head::ResidualCenter)
}

/// Cascade description: the shared step-one block and the step-two block.
#[derive(Debug, Clone, PartialEq)]
pub struct LsAaeSpec {
    pub step1: NetworkSpec,
    pub step2: NetworkSpec,
}

pub fn build_lsaae(profile: &ScaleProfile) -> Result<LsAaeSpec> {
    let mut step1 = build_inpainting_block(profile, 3, 1)?;
    step1.name = "lsaae_step1".into();
    let mut step2 = build_inpainting_block(profile, 3, 1)?;
    step2.name = "lsaae_step2".into();
    Ok(LsAaeSpec { step1, step2 })
}

/// Single inpainting block consuming all five slices (depth stride 2).
pub fn build_sib(profile: &ScaleProfile) -> Result<NetworkSpec> {
    let mut s = build_inpainting_block(profile, 5, 2)?;
    s.name = "sib".into();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_rounding() {
        let p = ScaleProfile::new(0.25, (64, 64)).unwrap();
        assert_eq!(p.ch(32), 8);
        assert_eq!(p.ch(16), 4);
        assert_eq!(p.ch(1), 1);
        let q = ScaleProfile::new(0.125, (32, 32)).unwrap();
        assert_eq!(q.ch(16), 4);
        assert_eq!(q.ch(128), 16);
        assert_eq!(ScaleProfile::full().ch(128), 128);
    }

    #[test]
    fn rejects_indivisible_inputs() {
        assert!(ScaleProfile::new(1.0, (180, 512)).is_err());
        assert!(ScaleProfile::new(0.0, (64, 64)).is_err());
        assert!(ScaleProfile::new(1.5, (64, 64)).is_err());
    }

    #[test]
    fn lae_layer_list_follows_the_table() {
        let s = build_lae(&ScaleProfile::full()).unwrap();
        let names: Vec<&str> = s.layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names.len(), 23);
        assert_eq!(names[0], "conv1");
        assert_eq!(names[22], "conv9");
        let exps: Vec<(String, usize)> = s
            .layers
            .iter()
            .filter_map(|l| match &l.kind {
                LayerKind::Block(b) => Some((l.name.clone(), b.exp)),
                _ => None,
            })
            .collect();
        for (n, e) in exps {
            let want = match n.as_str() {
                "block1" | "block7" | "block8" => 1,
                "block5_1" | "block6_1" => 3,
                _ => 6,
            };
            assert_eq!(e, want, "{n}");
        }
    }

    #[test]
    fn block_shortcut_rules() {
        let b = BlockSpec { ic: 16, oc: 32, stride: 2, exp: 6, concat_extra: None };
        assert!(!b.has_shortcut());
        let b = BlockSpec { ic: 32, oc: 16, stride: 1, exp: 1, concat_extra: None };
        assert!(b.projection_shortcut());
        let b = BlockSpec { ic: 16, oc: 32, stride: 1, exp: 1, concat_extra: Some(16) };
        assert!(b.has_shortcut() && !b.projection_shortcut());
        assert!(BlockSpec { ic: 4, oc: 4, stride: 3, exp: 1, concat_extra: None }.validate().is_err());
        assert!(BlockSpec { ic: 4, oc: 4, stride: 1, exp: 0, concat_extra: None }.validate().is_err());
    }
}

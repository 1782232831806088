//! Exact parameter and multiply-add accounting.
//!
//! A standard `k x k` convolution from `c_in` to `c_out` channels over an
//! `h x w` output costs `c_in * h * w * k^2 * c_out` multiply-adds. Its
//! depthwise separable factorisation costs `h * w * c_in * (k^2 + c_out)`,
//! so the saving is `k^2 * c_out / (k^2 + c_out)`, which tends to `k^2`.

use crate::autodiff::kernels::out_len;
use crate::error::{shape_err, Result};
use crate::nn::spec::{LayerKind, NetworkSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCost {
    pub mult_adds: u64,
    pub params: u64,
}

impl std::ops::Add for OpCost {
    type Output = OpCost;
    fn add(self, o: OpCost) -> OpCost {
        OpCost { mult_adds: self.mult_adds + o.mult_adds, params: self.params + o.params }
    }
}

impl std::ops::AddAssign for OpCost {
    fn add_assign(&mut self, o: OpCost) {
        *self = *self + o;
    }
}

pub fn standard_conv_mult_adds(c_in: u64, c_out: u64, k: u64, h: u64, w: u64) -> u64 {
    c_in * h * w * k * k * c_out
}

pub fn separable_conv_mult_adds(c_in: u64, c_out: u64, k: u64, h: u64, w: u64) -> u64 {
    h * w * c_in * (k * k + c_out)
}

/// Standard-over-separable cost ratio as an exact fraction `(num, den)`.
pub fn separable_ratio(c_out: u64, k: u64) -> (u64, u64) {
    (k * k * c_out, k * k + c_out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub cost: OpCost,
    /// Output channels followed by spatial dims.
    pub out_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostReport {
    pub total: OpCost,
    pub layers: Vec<LayerCost>,
    /// Mult-adds of every depthwise + pointwise pair as built.
    pub separable_mult_adds: u64,
    /// Mult-adds the same pairs would need as standard convolutions.
    pub standard_equivalent_mult_adds: u64,
}

impl CostReport {
    pub fn separable_saving(&self) -> f64 {
        if self.separable_mult_adds == 0 {
            return 1.0;
        }
        self.standard_equivalent_mult_adds as f64 / self.separable_mult_adds as f64
    }
}

fn conv_params(ic: usize, oc: usize, kvol: usize, bn: bool, bias: bool) -> u64 {
    (ic * oc * kvol + if bn { 2 * oc } else { 0 } + if bias { oc } else { 0 }) as u64
}

fn down(dims: &[usize], k: usize, stride: usize, pad: usize, what: &str) -> Result<Vec<usize>> {
    dims.iter()
        .map(|&d| out_len(d, k, stride, pad).ok_or_else(|| crate::error::Error::Shape(format!("{what}: kernel does not fit {dims:?}"))))
        .collect()
}

/// Parameters and multiply-adds of `spec` for per-sample input `input_dims`
/// (`[C, H, W]` or `[C, D, H, W]`). Batch norm contributes two learnable
/// scalars per channel; running statistics are not parameters.
pub fn count_params_flops(spec: &NetworkSpec, input_dims: &[usize]) -> Result<CostReport> {
    let mut report = CostReport::default();
    if spec.layers.is_empty() {
        return Ok(report);
    }
    if input_dims.len() < 3 {
        return shape_err(format!("input dims must be [C, H, W] or [C, D, H, W], got {input_dims:?}"));
    }
    let mut outs: Vec<(usize, Vec<usize>)> = Vec::with_capacity(spec.layers.len());
    let mut cur = (input_dims[0], input_dims[1..].to_vec());
    for layer in &spec.layers {
        let name = layer.name.as_str();
        let (mut c, spatial) = cur.clone();
        if let Some(j) = layer.concat_from {
            let Some((cj, sj)) = outs.get(j) else {
                return shape_err(format!("{name}: skip source {j} is not an earlier layer"));
            };
            if *sj != spatial {
                return shape_err(format!("{name}: skip source {sj:?} does not match {spatial:?}"));
            }
            c += cj;
        }
        let positions = |d: &[usize]| d.iter().product::<usize>() as u64;
        let (cost, next) = match &layer.kind {
            LayerKind::Conv { ic, oc, k, stride, pad, bn, relu: _, bias } => {
                if *ic != c {
                    return shape_err(format!("{name}: expects {ic} channels, chain provides {c}"));
                }
                let o = down(&spatial, *k, *stride, *pad, name)?;
                let ma = positions(&o) * (*ic * *k * *k * *oc) as u64;
                (OpCost { mult_adds: ma, params: conv_params(*ic, *oc, k * k, *bn, *bias) }, (*oc, o))
            }
            LayerKind::Conv3d { ic, oc, k, stride, pad, bn, relu: _ } => {
                if *ic != c || spatial.len() != 3 {
                    return shape_err(format!("{name}: expects {ic} channels on a volume, got {c} x {spatial:?}"));
                }
                let mut o = Vec::with_capacity(3);
                for a in 0..3 {
                    o.push(down(&spatial[a..a + 1], k[a], stride[a], pad[a], name)?[0]);
                }
                let kvol = k.iter().product::<usize>();
                let ma = positions(&o) * (*ic * kvol * *oc) as u64;
                (OpCost { mult_adds: ma, params: conv_params(*ic, *oc, kvol, *bn, false) }, (*oc, o))
            }
            LayerKind::SqueezeDepth => {
                if spatial.len() != 3 || spatial[0] != 1 {
                    return shape_err(format!("{name}: expects depth 1, got {spatial:?}"));
                }
                (OpCost::default(), (c, spatial[1..].to_vec()))
            }
            LayerKind::Block(b) => {
                b.validate()?;
                let ic = b.in_channels();
                if ic != c {
                    return shape_err(format!("{name}: expects {ic} input channels, chain provides {c}"));
                }
                let hid = b.hidden();
                let o = down(&spatial, 3, b.stride, 1, name)?;
                let pin = positions(&spatial);
                let pout = positions(&o);
                let expand = pin * (ic * hid) as u64;
                let dw = pout * (hid * 9) as u64;
                let project = pout * (hid * b.oc) as u64;
                let mut params = conv_params(ic, hid, 1, true, false)
                    + conv_params(1, hid, 9, true, false)
                    + conv_params(hid, b.oc, 1, true, false);
                let mut ma = expand + dw + project;
                if b.projection_shortcut() {
                    params += conv_params(ic, b.oc, 1, true, false);
                    ma += pin * (ic * b.oc) as u64;
                }
                report.separable_mult_adds += dw + project;
                report.standard_equivalent_mult_adds += pout * (hid * 9 * b.oc) as u64;
                (OpCost { mult_adds: ma, params }, (b.oc, o))
            }
            LayerKind::TransConv { ic, oc } => {
                if *ic != c {
                    return shape_err(format!("{name}: expects {ic} channels, chain provides {c}"));
                }
                let ma = positions(&spatial) * (*ic * *oc * 4) as u64;
                let o = spatial.iter().map(|d| d * 2).collect();
                (OpCost { mult_adds: ma, params: conv_params(*ic, *oc, 4, true, false) }, (*oc, o))
            }
        };
        report.total += cost;
        let mut out_dims = vec![next.0];
        out_dims.extend(&next.1);
        report.layers.push(LayerCost { name: name.to_string(), cost, out_dims });
        outs.push(next.clone());
        cur = next;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_block, build_discriminator, build_lae, BlockSpec, Layer, ScaleProfile};

    #[test]
    fn formulas_match_hand_arithmetic() {
        assert_eq!(standard_conv_mult_adds(32, 64, 3, 16, 16), 4_718_592);
        assert_eq!(separable_conv_mult_adds(32, 64, 3, 16, 16), 598_016);
        let (n, d) = separable_ratio(64, 3);
        assert_eq!(n * 598_016, d * 4_718_592);
    }

    #[test]
    fn empty_spec_costs_nothing() {
        let r = count_params_flops(&NetworkSpec::empty("e", vec![1, 8, 8]), &[1, 8, 8]).unwrap();
        assert_eq!(r.total, OpCost::default());
    }

    #[test]
    fn single_standard_conv() {
        let mut s = NetworkSpec::empty("c", vec![32, 16, 16]);
        s.layers.push(Layer {
            name: "conv".into(),
            kind: LayerKind::Conv { ic: 32, oc: 64, k: 3, stride: 1, pad: 1, bn: true, relu: true, bias: false },
            concat_from: None,
        });
        let r = count_params_flops(&s, &[32, 16, 16]).unwrap();
        assert_eq!(r.total.params, 18_432 + 128);
        assert_eq!(r.total.mult_adds, 4_718_592);
    }

    #[test]
    fn inconsistent_chain_is_rejected() {
        let mut s = NetworkSpec::empty("c", vec![3, 8, 8]);
        s.layers.push(Layer {
            name: "conv".into(),
            kind: LayerKind::Conv { ic: 4, oc: 4, k: 3, stride: 1, pad: 1, bn: false, relu: false, bias: false },
            concat_from: None,
        });
        assert!(count_params_flops(&s, &[3, 8, 8]).is_err());
    }

    #[test]
    fn block_params_by_hand() {
        let s = build_block(BlockSpec { ic: 32, oc: 32, stride: 1, exp: 6, concat_extra: None }, (8, 8)).unwrap();
        assert_eq!(count_params_flops(&s, &[32, 8, 8]).unwrap().total.params, 14_848);
    }

    #[test]
    fn full_lae_sizes_follow_the_table() {
        let s = build_lae(&ScaleProfile::full()).unwrap();
        let r = count_params_flops(&s, &[1, 192, 512]).unwrap();
        let size = |n: &str| r.layers.iter().find(|l| l.name == n).unwrap().out_dims.clone();
        assert_eq!(size("conv1"), vec![32, 96, 256]);
        assert_eq!(size("block1"), vec![16, 96, 256]);
        assert_eq!(size("block2_1"), vec![32, 48, 128]);
        assert_eq!(size("block3_3"), vec![64, 24, 64]);
        assert_eq!(size("block4_4"), vec![128, 12, 32]);
        assert_eq!(size("trans_conv1"), vec![64, 24, 64]);
        assert_eq!(size("block5_1"), vec![64, 24, 64]);
        assert_eq!(size("block6_1"), vec![32, 48, 128]);
        assert_eq!(size("block7"), vec![32, 96, 256]);
        assert_eq!(size("block8"), vec![32, 96, 256]);
        assert_eq!(size("trans_conv4"), vec![16, 192, 512]);
        assert_eq!(size("conv9"), vec![1, 192, 512]);
    }

    #[test]
    fn counts_ignore_input_content_and_repeat() {
        let p = ScaleProfile::new(0.5, (64, 64)).unwrap();
        let s = build_discriminator(&p).unwrap();
        let a = count_params_flops(&s, &[1, 64, 64]).unwrap();
        let b = count_params_flops(&s, &[1, 64, 64]).unwrap();
        assert_eq!(a, b);
    }
}

//! Decoupled detection head for one feature scale.
//!
//! The classification branch is two depthwise-separable 3x3 stages followed by
//! a 1x1 projection to `num_classes` logits. The regression branch is two
//! standard 3x3 stages followed by a 1x1 projection to 4 box values. The
//! branches share no weights. A multi-scale head is a `Vec<HeadParams>`.

use serde::{Deserialize, Serialize};

use super::{sum_params, Accounting, Activation, ConvLayer, ConvShape, LayerFactory};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

pub const BOX_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub in_channels: usize,
    pub cls_hidden: usize,
    pub reg_hidden: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

impl HeadConfig {
    pub fn new(in_channels: usize, cls_hidden: usize, reg_hidden: usize, num_classes: usize) -> Result<Self> {
        let cfg = Self {
            in_channels,
            cls_hidden,
            reg_hidden,
            num_classes,
            activation: Activation::Silu,
        };
        cfg.specs()?;
        Ok(cfg)
    }

    fn cls_specs(&self) -> Result<Vec<(&'static str, ConvSpec)>> {
        let (c, ch) = (self.in_channels, self.cls_hidden);
        Ok(vec![
            ("cls.0.dw", ConvSpec::depthwise(c, 3, 1)?),
            ("cls.0.pw", ConvSpec::pointwise(c, ch)?),
            ("cls.1.dw", ConvSpec::depthwise(ch, 3, 1)?),
            ("cls.1.pw", ConvSpec::pointwise(ch, ch)?),
            ("cls.pred", ConvSpec::pointwise(ch, self.num_classes)?),
        ])
    }

    fn reg_specs(&self) -> Result<Vec<(&'static str, ConvSpec)>> {
        let (c, rh) = (self.in_channels, self.reg_hidden);
        Ok(vec![
            ("reg.0", ConvSpec::standard(c, rh, 3, 1)?),
            ("reg.1", ConvSpec::standard(rh, rh, 3, 1)?),
            ("reg.pred", ConvSpec::pointwise(rh, BOX_CHANNELS)?),
        ])
    }

    fn specs(&self) -> Result<Vec<(&'static str, ConvSpec)>> {
        let mut s = self.cls_specs()?;
        s.extend(self.reg_specs()?);
        Ok(s)
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        self.specs()?.into_iter().map(|(_, s)| ConvShape::new(s, true)).collect()
    }
}

impl Accounting for HeadConfig {
    fn param_count(&self) -> u64 {
        self.conv_shapes().map(|s| sum_params(&s)).unwrap_or(0)
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.conv_shapes()?.iter().map(|s| s.flop_count(height, width)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub config: HeadConfig,
    /// dw, pw, dw, pw, pred
    pub cls: Vec<ConvLayer>,
    /// conv, conv, pred
    pub reg: Vec<ConvLayer>,
}

impl HeadParams {
    pub fn build(config: HeadConfig, factory: &mut impl LayerFactory) -> Result<Self> {
        let make = |specs: Vec<(&'static str, ConvSpec)>, f: &mut dyn FnMut(&str, ConvSpec) -> Result<ConvLayer>| {
            specs.into_iter().map(|(n, s)| f(n, s)).collect::<Result<Vec<_>>>()
        };
        let mut f = |n: &str, s: ConvSpec| factory.layer(n, s, true);
        let cls = make(config.cls_specs()?, &mut f)?;
        let reg = make(config.reg_specs()?, &mut f)?;
        Ok(Self { config, cls, reg })
    }

    pub fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        let names = ["cls.0.dw", "cls.0.pw", "cls.1.dw", "cls.1.pw", "cls.pred", "reg.0", "reg.1", "reg.pred"];
        names.into_iter().zip(self.cls.iter().chain(&self.reg)).collect()
    }
}

impl Accounting for HeadParams {
    fn param_count(&self) -> u64 {
        self.layers().iter().map(|(_, l)| l.shape().param_count()).sum()
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.config.flop_count(height, width)
    }
}

/// Returns `(cls [num_classes, H, W], box [4, H, W])`. Class outputs are raw logits.
pub fn head_forward(x: &Tensor, p: &HeadParams) -> Result<(Tensor, Tensor)> {
    let (c, _, _) = x.dims3()?;
    if c != p.config.in_channels {
        return Err(Error::shape("head_forward", "input channels", p.config.in_channels, c));
    }
    let act = p.config.activation;

    let mut cls = x.clone();
    for (i, layer) in p.cls.iter().enumerate() {
        cls = layer.forward(&cls)?;
        // activation after each stage's pointwise mix, none on the prediction
        if i == 1 || i == 3 {
            cls = act.apply_tensor(cls);
        }
    }

    let mut reg = x.clone();
    let last = p.reg.len() - 1;
    for (i, layer) in p.reg.iter().enumerate() {
        reg = layer.forward(&reg)?;
        if i != last {
            reg = act.apply_tensor(reg);
        }
    }
    Ok((cls, reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{RandomInit, ZeroInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nine_class_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = HeadParams::build(HeadConfig::new(8, 16, 8, 9).unwrap(), &mut RandomInit(&mut rng)).unwrap();
        let x = Tensor::from_fn(&[8, 5, 6], |_| rng.random_range(-1.0..1.0)).unwrap();
        let (cls, bx) = head_forward(&x, &p).unwrap();
        assert_eq!(cls.shape(), &[9, 5, 6]);
        assert_eq!(bx.shape(), &[4, 5, 6]);
    }

    #[test]
    fn zero_classification_branch_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut p = HeadParams::build(HeadConfig::new(4, 8, 8, 3).unwrap(), &mut RandomInit(&mut rng)).unwrap();
        p.cls = HeadParams::build(p.config, &mut ZeroInit).unwrap().cls;
        let x = Tensor::from_fn(&[4, 6, 6], |_| rng.random_range(-5.0..5.0)).unwrap();
        let (cls, bx) = head_forward(&x, &p).unwrap();
        assert!(cls.data().iter().all(|&v| v == 0.0));
        assert!(bx.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn layer_names_are_complete() {
        let p = HeadParams::build(HeadConfig::new(2, 2, 2, 1).unwrap(), &mut ZeroInit).unwrap();
        assert_eq!(p.layers().len(), 8);
        assert_eq!(p.param_count(), p.config.param_count());
    }
}

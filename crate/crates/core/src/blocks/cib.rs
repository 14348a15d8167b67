//! Compact inverted block.
//!
//! `x -> dw3x3 -> pw expand (C -> eC) -> act -> [dw7x7 on eC] -> pw project (eC -> C) (+ x)`
//!
//! Depthwise stages mix spatially within a channel, pointwise stages mix
//! channels. The 7x7 depthwise stage is the large-kernel option reserved for
//! deep stages.

use serde::{Deserialize, Serialize};

use super::{sum_params, Accounting, Activation, ConvLayer, ConvShape, LayerFactory};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

pub const LARGE_KERNEL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CibConfig {
    pub channels: usize,
    pub expansion: f64,
    pub large_kernel: bool,
    pub residual: bool,
    pub activation: Activation,
}

impl CibConfig {
    pub fn new(channels: usize, expansion: f64, large_kernel: bool) -> Result<Self> {
        let cfg = Self {
            channels,
            expansion,
            large_kernel,
            residual: true,
            activation: Activation::Silu,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::invalid("CIB config", "channels must be positive"));
        }
        if !(self.expansion.is_finite() && self.expansion > 0.0) {
            return Err(Error::invalid("CIB config", format!("expansion {} must be > 0", self.expansion)));
        }
        Ok(())
    }

    /// Width of the expanded representation, `round(e * C)` and at least 1.
    pub fn hidden(&self) -> usize {
        ((self.channels as f64 * self.expansion).round() as usize).max(1)
    }

    fn specs(&self) -> Result<Vec<(&'static str, ConvSpec)>> {
        self.validate()?;
        let (c, h) = (self.channels, self.hidden());
        let mut specs = vec![
            ("dw", ConvSpec::depthwise(c, 3, 1)?),
            ("expand", ConvSpec::pointwise(c, h)?),
        ];
        if self.large_kernel {
            specs.push(("dw_large", ConvSpec::depthwise(h, LARGE_KERNEL, 1)?));
        }
        specs.push(("project", ConvSpec::pointwise(h, c)?));
        Ok(specs)
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        self.specs()?.into_iter().map(|(_, s)| ConvShape::new(s, true)).collect()
    }
}

impl Accounting for CibConfig {
    fn param_count(&self) -> u64 {
        self.conv_shapes().map(|s| sum_params(&s)).unwrap_or(0)
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.conv_shapes()?.iter().map(|s| s.flop_count(height, width)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CibParams {
    pub config: CibConfig,
    pub dw: ConvLayer,
    pub expand: ConvLayer,
    pub dw_large: Option<ConvLayer>,
    pub project: ConvLayer,
}

impl CibParams {
    pub fn build(config: CibConfig, factory: &mut impl LayerFactory) -> Result<Self> {
        let mut layers = Vec::new();
        for (name, spec) in config.specs()? {
            layers.push(factory.layer(name, spec, true)?);
        }
        let project = layers.pop().expect("project layer");
        let dw_large = if config.large_kernel { layers.pop() } else { None };
        let expand = layers.pop().expect("expand layer");
        let dw = layers.pop().expect("dw layer");
        Ok(Self {
            config,
            dw,
            expand,
            dw_large,
            project,
        })
    }

    pub fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        let mut out = vec![("dw", &self.dw), ("expand", &self.expand)];
        if let Some(l) = &self.dw_large {
            out.push(("dw_large", l));
        }
        out.push(("project", &self.project));
        out
    }
}

impl Accounting for CibParams {
    fn param_count(&self) -> u64 {
        self.layers().iter().map(|(_, l)| l.shape().param_count()).sum()
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.config.flop_count(height, width)
    }
}

pub fn cib_forward(x: &Tensor, p: &CibParams) -> Result<Tensor> {
    let (c, _, _) = x.dims3()?;
    if c != p.config.channels {
        return Err(Error::shape("cib_forward", "input channels", p.config.channels, c));
    }
    let mut y = p.dw.forward(x)?;
    y = p.config.activation.apply_tensor(p.expand.forward(&y)?);
    if let Some(large) = &p.dw_large {
        y = large.forward(&y)?;
    }
    y = p.project.forward(&y)?;
    if p.config.residual {
        y = y.add(x)?;
    }
    Ok(y)
}

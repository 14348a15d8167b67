//! Forward passes of the detector's building blocks and their cost accounting.
//!
//! Every block is described twice: a `*Config` that carries only geometry (and
//! is enough for parameter and FLOP counts) and a `*Params` that owns the
//! weights. Parameters are built through a [`LayerFactory`], so the same code
//! path yields zero, random, or file-loaded weights.
//!
//! Batch normalization is assumed folded into each convolution's bias.

mod cib;
mod head;
mod model;
mod psa;
mod scdown;
pub mod weights_io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv2d, depthwise_conv2d, pointwise_conv2d, ConvSpec, Tensor};

pub use cib::{cib_forward, CibConfig, CibParams};
pub use head::{head_forward, HeadConfig, HeadParams};
pub use model::{
    BlockConfig, ModelDescription, PlacementPolicy, ScaleHead, StageConfig, VariantName, VariantSpec,
};
pub use psa::{psa_forward, psa_forward_traced, PsaConfig, PsaParams, PsaTrace};
pub use scdown::{scdown_forward, ScDownConfig, ScDownParams};
pub use weights_io::WeightStore;

/// Pointwise nonlinearity applied after expanding convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    Silu,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Silu => v / (1.0 + (-v).exp()),
            Activation::Identity => v,
        }
    }

    pub fn apply_tensor(self, t: Tensor) -> Tensor {
        match self {
            Activation::Identity => t,
            Activation::Silu => t.map(|v| self.apply(v)),
        }
    }
}

/// Geometry of one convolution, for accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub spec: ConvSpec,
    pub bias: bool,
}

impl ConvShape {
    pub fn new(spec: ConvSpec, bias: bool) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, bias })
    }

    /// `out * (in / groups) * k^2`.
    pub fn weight_count(&self) -> u64 {
        let s = &self.spec;
        (s.out_channels * (s.in_channels / s.groups) * s.kernel_size * s.kernel_size) as u64
    }

    pub fn param_count(&self) -> u64 {
        self.weight_count() + if self.bias { self.spec.out_channels as u64 } else { 0 }
    }

    /// `2 * weight_count * H' * W'`, with a multiply-add counted as two FLOPs.
    pub fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        let (oh, ow) = self.spec.output_size(height, width)?;
        Ok(2 * self.weight_count() * (oh * ow) as u64)
    }
}

/// Parameter and FLOP totals of a block or model.
pub trait Accounting {
    fn param_count(&self) -> u64;
    /// FLOPs of one forward pass over an input of `height x width`.
    fn flop_count(&self, height: usize, width: usize) -> Result<u64>;
}

impl Accounting for ConvShape {
    fn param_count(&self) -> u64 {
        ConvShape::param_count(self)
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        ConvShape::flop_count(self, height, width)
    }
}

/// A convolution together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

impl ConvLayer {
    pub fn new(spec: ConvSpec, weights: Tensor, bias: Option<Tensor>) -> Result<Self> {
        spec.validate()?;
        if weights.shape() != spec.weight_shape() {
            return Err(Error::shape(
                "ConvLayer::new",
                "weight shape",
                format!("{:?}", spec.weight_shape()),
                format!("{:?}", weights.shape()),
            ));
        }
        if let Some(b) = &bias {
            if b.shape() != [spec.out_channels] {
                return Err(Error::shape(
                    "ConvLayer::new",
                    "bias shape",
                    format!("[{}]", spec.out_channels),
                    format!("{:?}", b.shape()),
                ));
            }
        }
        Ok(Self { spec, weights, bias })
    }

    pub fn shape(&self) -> ConvShape {
        ConvShape {
            spec: self.spec,
            bias: self.bias.is_some(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let bias = self.bias.as_ref();
        if self.spec.is_pointwise() {
            pointwise_conv2d(x, &self.weights, bias)
        } else if self.spec.is_depthwise() && self.spec.groups > 1 {
            depthwise_conv2d(x, &self.weights, bias, &self.spec)
        } else {
            conv2d(x, &self.weights, bias, &self.spec)
        }
    }
}

/// Source of layer weights during block construction.
pub trait LayerFactory {
    fn layer(&mut self, name: &str, spec: ConvSpec, bias: bool) -> Result<ConvLayer>;
}

/// All-zero weights and biases.
pub struct ZeroInit;

impl LayerFactory for ZeroInit {
    fn layer(&mut self, _name: &str, spec: ConvSpec, bias: bool) -> Result<ConvLayer> {
        let weights = Tensor::zeros(&spec.weight_shape())?;
        let bias = bias.then(|| Tensor::zeros(&[spec.out_channels])).transpose()?;
        ConvLayer::new(spec, weights, bias)
    }
}

/// Uniform weights in `±1/sqrt(fan_in)`, biases in `±0.1`.
pub struct RandomInit<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> LayerFactory for RandomInit<'_, R> {
    fn layer(&mut self, _name: &str, spec: ConvSpec, bias: bool) -> Result<ConvLayer> {
        let [_, cin, k, _] = spec.weight_shape();
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        let rng = &mut *self.0;
        let weights = Tensor::from_fn(&spec.weight_shape(), |_| rng.random_range(-bound..=bound))?;
        let bias = if bias {
            Some(Tensor::from_fn(&[spec.out_channels], |_| rng.random_range(-0.1..=0.1))?)
        } else {
            None
        };
        ConvLayer::new(spec, weights, bias)
    }
}

/// Loads `<prefix>.<name>.weight` and, when requested, `<prefix>.<name>.bias`.
pub struct StoreInit<'a> {
    pub store: &'a WeightStore,
    pub prefix: String,
}

impl LayerFactory for StoreInit<'_> {
    fn layer(&mut self, name: &str, spec: ConvSpec, bias: bool) -> Result<ConvLayer> {
        let key = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        let weights = self.store.require(&format!("{key}.weight"))?.clone();
        let bias = if bias {
            Some(self.store.require(&format!("{key}.bias"))?.clone())
        } else {
            None
        };
        ConvLayer::new(spec, weights, bias)
    }
}

/// Appends every layer of a block to `store` under `prefix`.
pub fn export_layers<'a>(
    store: &mut WeightStore,
    prefix: &str,
    layers: impl IntoIterator<Item = (&'static str, &'a ConvLayer)>,
) -> Result<()> {
    for (name, layer) in layers {
        let key = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        };
        store.insert(format!("{key}.weight"), layer.weights.clone())?;
        if let Some(b) = &layer.bias {
            store.insert(format!("{key}.bias"), b.clone())?;
        }
    }
    Ok(())
}

fn sum_params<'a>(shapes: impl IntoIterator<Item = &'a ConvShape>) -> u64 {
    shapes.into_iter().map(ConvShape::param_count).sum()
}

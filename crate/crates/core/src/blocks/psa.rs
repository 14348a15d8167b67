//! Partial self-attention.
//!
//! A 1x1 fuse convolution mixes the input, the result is split into two
//! channel halves, and only the second half goes through multi-head
//! self-attention and a feed-forward stage (both residual). The halves are
//! concatenated again and mixed by a second 1x1 fuse convolution.
//!
//! Queries and keys have `qk_dim = v_dim / 2` channels in total. Attention is
//! computed over all `H * W` positions, one `[n, n]` matrix per head with rows
//! indexed by query position.

use serde::{Deserialize, Serialize};

use super::{sum_params, Accounting, Activation, ConvLayer, ConvShape, LayerFactory};
use crate::error::{Error, Result};
use crate::tensor::{matmul, softmax_rows, ConvSpec, Matrix, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsaConfig {
    pub channels: usize,
    pub heads: usize,
    pub qk_dim: usize,
    pub v_dim: usize,
    pub ffn_hidden: usize,
    pub activation: Activation,
}

impl PsaConfig {
    /// Defaults: values span the attended half (`v_dim = C/2`), queries and
    /// keys half of that, feed-forward width `C`.
    pub fn new(channels: usize, heads: usize) -> Result<Self> {
        let cfg = Self {
            channels,
            heads,
            qk_dim: channels / 4,
            v_dim: channels / 2,
            ffn_hidden: channels,
            activation: Activation::Silu,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn half(&self) -> usize {
        self.channels / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("PSA config", reason));
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return bad(format!("channels must be even and >= 2, got {}", self.channels));
        }
        if self.heads == 0 {
            return bad("heads must be >= 1".into());
        }
        if self.v_dim == 0 || !self.v_dim.is_multiple_of(self.heads) {
            return bad(format!("v_dim {} must be a positive multiple of heads {}", self.v_dim, self.heads));
        }
        if 2 * self.qk_dim != self.v_dim {
            return bad(format!("qk_dim {} must be exactly v_dim / 2 (v_dim {})", self.qk_dim, self.v_dim));
        }
        if !self.qk_dim.is_multiple_of(self.heads) {
            return bad(format!("qk_dim {} must be a multiple of heads {}", self.qk_dim, self.heads));
        }
        if self.ffn_hidden == 0 {
            return bad("ffn_hidden must be positive".into());
        }
        Ok(())
    }

    fn specs(&self) -> Result<Vec<(&'static str, ConvSpec)>> {
        self.validate()?;
        let (c, half) = (self.channels, self.half());
        Ok(vec![
            ("fuse_in", ConvSpec::pointwise(c, c)?),
            ("query", ConvSpec::pointwise(half, self.qk_dim)?),
            ("key", ConvSpec::pointwise(half, self.qk_dim)?),
            ("value", ConvSpec::pointwise(half, self.v_dim)?),
            ("attn_out", ConvSpec::pointwise(self.v_dim, half)?),
            ("ffn_in", ConvSpec::pointwise(half, self.ffn_hidden)?),
            ("ffn_out", ConvSpec::pointwise(self.ffn_hidden, half)?),
            ("fuse_out", ConvSpec::pointwise(c, c)?),
        ])
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        self.specs()?.into_iter().map(|(_, s)| ConvShape::new(s, true)).collect()
    }
}

impl Accounting for PsaConfig {
    fn param_count(&self) -> u64 {
        self.conv_shapes().map(|s| sum_params(&s)).unwrap_or(0)
    }

    /// Convolutions plus the two attention products (`QK^T` and `AV`):
    /// `2 n^2 qk_dim + 2 n^2 v_dim` with `n = H * W`. Softmax and activations
    /// are not counted.
    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        let convs: u64 = self
            .conv_shapes()?
            .iter()
            .map(|s| s.flop_count(height, width))
            .sum::<Result<u64>>()?;
        let n = (height * width) as u64;
        Ok(convs + 2 * n * n * (self.qk_dim + self.v_dim) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsaParams {
    pub config: PsaConfig,
    pub fuse_in: ConvLayer,
    pub query: ConvLayer,
    pub key: ConvLayer,
    pub value: ConvLayer,
    pub attn_out: ConvLayer,
    pub ffn_in: ConvLayer,
    pub ffn_out: ConvLayer,
    pub fuse_out: ConvLayer,
}

impl PsaParams {
    pub fn build(config: PsaConfig, factory: &mut impl LayerFactory) -> Result<Self> {
        let mut it = config
            .specs()?
            .into_iter()
            .map(|(name, spec)| factory.layer(name, spec, true))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || it.next().expect("eight PSA layers");
        Ok(Self {
            config,
            fuse_in: next(),
            query: next(),
            key: next(),
            value: next(),
            attn_out: next(),
            ffn_in: next(),
            ffn_out: next(),
            fuse_out: next(),
        })
    }

    pub fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        vec![
            ("fuse_in", &self.fuse_in),
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("attn_out", &self.attn_out),
            ("ffn_in", &self.ffn_in),
            ("ffn_out", &self.ffn_out),
            ("fuse_out", &self.fuse_out),
        ]
    }
}

impl Accounting for PsaParams {
    fn param_count(&self) -> u64 {
        self.layers().iter().map(|(_, l)| l.shape().param_count()).sum()
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.config.flop_count(height, width)
    }
}

/// Intermediate values of one PSA forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaTrace {
    pub output: Tensor,
    /// First half after `fuse_in`; bypasses attention.
    pub passthrough: Tensor,
    /// Second half after attention and feed-forward, before `fuse_out`.
    pub attended: Tensor,
    /// Softmax attention per head, `[n, n]`, rows are query positions.
    pub attention: Vec<Matrix>,
}

pub fn psa_forward(x: &Tensor, p: &PsaParams) -> Result<Tensor> {
    psa_forward_traced(x, p).map(|t| t.output)
}

pub fn psa_forward_traced(x: &Tensor, p: &PsaParams) -> Result<PsaTrace> {
    let cfg = &p.config;
    cfg.validate()?;
    let (c, h, w) = x.dims3()?;
    if c % 2 != 0 {
        return Err(Error::invalid("psa_forward input", format!("channel count {c} must be even")));
    }
    if c != cfg.channels {
        return Err(Error::shape("psa_forward", "input channels", cfg.channels, c));
    }
    let n = h * w;
    let half = cfg.half();

    let fused = p.fuse_in.forward(x)?;
    let passthrough = fused.channels(0, half)?;
    let attended_in = fused.channels(half, c)?;

    let q = to_matrix(p.query.forward(&attended_in)?)?;
    let k = to_matrix(p.key.forward(&attended_in)?)?;
    let v = to_matrix(p.value.forward(&attended_in)?)?;

    let dq = cfg.qk_dim / cfg.heads;
    let dv = cfg.v_dim / cfg.heads;
    let scale = 1.0 / (dq as f64).sqrt();
    let mut attention = Vec::with_capacity(cfg.heads);
    let mut heads_out = Vec::with_capacity(cfg.v_dim * n);
    for head in 0..cfg.heads {
        let qh = row_block(&q, head * dq, dq)?;
        let kh = row_block(&k, head * dq, dq)?;
        let vh = row_block(&v, head * dv, dv)?;
        let scores = matmul(&qh.transpose(), &kh)?;
        let scaled = Matrix::new(n, n, scores.into_data().into_iter().map(|s| s * scale).collect())?;
        let attn = softmax_rows(&scaled);
        // out[d, i] = sum_j V[d, j] * A[i, j]
        let out = matmul(&vh, &attn.transpose())?;
        heads_out.extend_from_slice(out.data());
        attention.push(attn);
    }
    let heads_out = Tensor::new(vec![cfg.v_dim, h, w], heads_out)?;

    let after_attn = attended_in.add(&p.attn_out.forward(&heads_out)?)?;
    let ffn = cfg.activation.apply_tensor(p.ffn_in.forward(&after_attn)?);
    let attended = after_attn.add(&p.ffn_out.forward(&ffn)?)?;

    let merged = Tensor::concat_channels(&[&passthrough, &attended])?;
    let output = p.fuse_out.forward(&merged)?;
    Ok(PsaTrace {
        output,
        passthrough,
        attended,
        attention,
    })
}

fn to_matrix(t: Tensor) -> Result<Matrix> {
    let (c, h, w) = t.dims3()?;
    Matrix::new(c, h * w, t.into_data())
}

fn row_block(m: &Matrix, start: usize, rows: usize) -> Result<Matrix> {
    let cols = m.cols();
    Matrix::new(rows, cols, m.data()[start * cols..(start + rows) * cols].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{RandomInit, ZeroInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_pointwise(c: usize) -> ConvLayer {
        let w = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 }).unwrap();
        ConvLayer::new(ConvSpec::pointwise(c, c).unwrap(), w, Some(Tensor::zeros(&[c]).unwrap())).unwrap()
    }

    #[test]
    fn inert_attention_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = PsaParams::build(PsaConfig::new(8, 2).unwrap(), &mut ZeroInit).unwrap();
        p.fuse_in = identity_pointwise(8);
        p.fuse_out = identity_pointwise(8);
        let x = Tensor::from_fn(&[8, 3, 4], |_| rng.random_range(-1.0..1.0)).unwrap();
        let trace = psa_forward_traced(&x, &p).unwrap();
        assert_eq!(trace.passthrough, x.channels(0, 4).unwrap());
        assert_eq!(trace.output, x);
    }

    #[test]
    fn single_position_attention_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = PsaParams::build(PsaConfig::new(8, 2).unwrap(), &mut RandomInit(&mut rng)).unwrap();
        let x = Tensor::from_fn(&[8, 1, 1], |_| rng.random_range(-1.0..1.0)).unwrap();
        let trace = psa_forward_traced(&x, &p).unwrap();
        for a in &trace.attention {
            assert_eq!(a.data(), &[1.0]);
        }
    }

    #[test]
    fn config_enforces_half_width_queries() {
        assert!(PsaConfig::new(7, 1).is_err());
        let mut cfg = PsaConfig::new(16, 2).unwrap();
        assert_eq!(cfg.qk_dim * 2, cfg.v_dim);
        cfg.qk_dim = cfg.v_dim;
        assert!(cfg.validate().is_err());
        assert!(PsaConfig::new(16, 3).is_err());
    }

    #[test]
    fn odd_input_channels_rejected() {
        let p = PsaParams::build(PsaConfig::new(8, 1).unwrap(), &mut ZeroInit).unwrap();
        let x = Tensor::zeros(&[7, 2, 2]).unwrap();
        assert!(psa_forward(&x, &p).is_err());
    }
}

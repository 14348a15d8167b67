//! Spatial-channel decoupled downsampling: a pointwise convolution changes the
//! channel count, then a stride-2 depthwise convolution halves the spatial size.

use serde::{Deserialize, Serialize};

use super::{sum_params, Accounting, ConvLayer, ConvShape, LayerFactory};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScDownConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
}

impl ScDownConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Result<Self> {
        let cfg = Self {
            in_channels,
            out_channels,
            kernel_size: 3,
        };
        cfg.specs()?;
        Ok(cfg)
    }

    fn specs(&self) -> Result<[(&'static str, ConvSpec); 2]> {
        Ok([
            ("channel", ConvSpec::pointwise(self.in_channels, self.out_channels)?),
            ("spatial", ConvSpec::depthwise(self.out_channels, self.kernel_size, 2)?),
        ])
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        self.specs()?.into_iter().map(|(_, s)| ConvShape::new(s, true)).collect()
    }

    /// `ceil(H / 2) x ceil(W / 2)` for the default 3x3 kernel.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.specs()?[1].1.output_size(height, width)
    }
}

impl Accounting for ScDownConfig {
    fn param_count(&self) -> u64 {
        self.conv_shapes().map(|s| sum_params(&s)).unwrap_or(0)
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        let shapes = self.conv_shapes()?;
        Ok(shapes[0].flop_count(height, width)? + shapes[1].flop_count(height, width)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScDownParams {
    pub config: ScDownConfig,
    pub channel: ConvLayer,
    pub spatial: ConvLayer,
}

impl ScDownParams {
    pub fn build(config: ScDownConfig, factory: &mut impl LayerFactory) -> Result<Self> {
        let [(cn, cs), (sn, ss)] = config.specs()?;
        Ok(Self {
            config,
            channel: factory.layer(cn, cs, true)?,
            spatial: factory.layer(sn, ss, true)?,
        })
    }

    pub fn layers(&self) -> Vec<(&'static str, &ConvLayer)> {
        vec![("channel", &self.channel), ("spatial", &self.spatial)]
    }
}

impl Accounting for ScDownParams {
    fn param_count(&self) -> u64 {
        self.layers().iter().map(|(_, l)| l.shape().param_count()).sum()
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        self.config.flop_count(height, width)
    }
}

pub fn scdown_forward(x: &Tensor, p: &ScDownParams) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if c != p.config.in_channels {
        return Err(Error::shape("scdown_forward", "input channels", p.config.in_channels, c));
    }
    if h < 2 || w < 2 {
        return Err(Error::shape("scdown_forward", "spatial size", ">= 2x2", format!("{h}x{w}")));
    }
    let mixed = p.channel.forward(x)?;
    p.spatial.forward(&mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{RandomInit, ZeroInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_channel(c: usize) -> ConvLayer {
        let w = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 }).unwrap();
        ConvLayer::new(ConvSpec::pointwise(c, c).unwrap(), w, Some(Tensor::zeros(&[c]).unwrap())).unwrap()
    }

    fn single_tap(c: usize, tap: usize) -> ConvLayer {
        let w = Tensor::from_fn(&[c, 1, 3, 3], |i| if i % 9 == tap { 1.0 } else { 0.0 }).unwrap();
        ConvLayer::new(ConvSpec::depthwise(c, 3, 2).unwrap(), w, Some(Tensor::zeros(&[c]).unwrap())).unwrap()
    }

    #[test]
    fn halves_spatial_and_changes_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ScDownParams::build(ScDownConfig::new(16, 32).unwrap(), &mut RandomInit(&mut rng)).unwrap();
        let x = Tensor::from_fn(&[16, 32, 32], |_| rng.random_range(-1.0..1.0)).unwrap();
        assert_eq!(scdown_forward(&x, &p).unwrap().shape(), &[32, 16, 16]);
        let odd = Tensor::zeros(&[16, 7, 5]).unwrap();
        assert_eq!(scdown_forward(&odd, &p).unwrap().shape(), &[32, 4, 3]);
    }

    #[test]
    fn center_tap_is_stride_two_subsampling() {
        let (c, h, w) = (3, 7, 6);
        let x = Tensor::from_fn(&[c, h, w], |i| i as f64).unwrap();
        let p = ScDownParams {
            config: ScDownConfig::new(c, c).unwrap(),
            channel: identity_channel(c),
            spatial: single_tap(c, 4),
        };
        let y = scdown_forward(&x, &p).unwrap();
        let (oh, ow) = (4, 3);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let got = y.data()[(ch * oh + oy) * ow + ox];
                    assert_eq!(got, x.data()[(ch * h + 2 * oy) * w + 2 * ox]);
                }
            }
        }
    }

    #[test]
    fn top_left_tap_is_shifted_subsampling() {
        // With one pixel of zero padding the top-left tap of output (i, j)
        // reads input (2i - 1, 2j - 1).
        let (c, h, w) = (2, 6, 6);
        let x = Tensor::from_fn(&[c, h, w], |i| i as f64 + 1.0).unwrap();
        let p = ScDownParams {
            config: ScDownConfig::new(c, c).unwrap(),
            channel: identity_channel(c),
            spatial: single_tap(c, 0),
        };
        let y = scdown_forward(&x, &p).unwrap();
        for ch in 0..c {
            for oy in 0..3 {
                for ox in 0..3 {
                    let got = y.data()[(ch * 3 + oy) * 3 + ox];
                    let want = if oy == 0 || ox == 0 {
                        0.0
                    } else {
                        x.data()[(ch * h + 2 * oy - 1) * w + 2 * ox - 1]
                    };
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn constant_input_gives_constant_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = ScDownParams::build(ScDownConfig::new(4, 6).unwrap(), &mut RandomInit(&mut rng)).unwrap();
        // all taps equal 1/9 would still see the zero border; use the center tap only
        p.spatial = single_tap(6, 4);
        let x = Tensor::from_fn(&[4, 8, 8], |i| (i / 64) as f64 * 0.5 - 1.0).unwrap();
        let y = scdown_forward(&x, &p).unwrap();
        for plane in y.data().chunks(16) {
            assert!(plane.iter().all(|&v| v == plane[0]));
        }
    }

    #[test]
    fn too_small_input_rejected() {
        let p = ScDownParams::build(ScDownConfig::new(2, 2).unwrap(), &mut ZeroInit).unwrap();
        assert!(scdown_forward(&Tensor::zeros(&[2, 1, 4]).unwrap(), &p).is_err());
        assert!(scdown_forward(&Tensor::zeros(&[3, 4, 4]).unwrap(), &p).is_err());
    }
}

//! Model descriptions, placement rules and the N/S/M/L/X variant table.

use serde::{Deserialize, Serialize};

use super::{Accounting, CibConfig, ConvShape, HeadConfig, PsaConfig, ScDownConfig};
use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockConfig {
    Conv(ConvShape),
    Cib(CibConfig),
    Psa(PsaConfig),
    ScDown(ScDownConfig),
}

impl BlockConfig {
    fn name(&self) -> &'static str {
        match self {
            BlockConfig::Conv(_) => "conv",
            BlockConfig::Cib(_) => "cib",
            BlockConfig::Psa(_) => "psa",
            BlockConfig::ScDown(_) => "scdown",
        }
    }

    fn in_channels(&self) -> usize {
        match self {
            BlockConfig::Conv(s) => s.spec.in_channels,
            BlockConfig::Cib(c) => c.channels,
            BlockConfig::Psa(p) => p.channels,
            BlockConfig::ScDown(s) => s.in_channels,
        }
    }

    fn out_channels(&self) -> usize {
        match self {
            BlockConfig::Conv(s) => s.spec.out_channels,
            BlockConfig::Cib(c) => c.channels,
            BlockConfig::Psa(p) => p.channels,
            BlockConfig::ScDown(s) => s.out_channels,
        }
    }

    fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self {
            BlockConfig::Conv(s) => s.spec.output_size(h, w),
            BlockConfig::ScDown(s) => s.output_size(h, w),
            BlockConfig::Cib(_) | BlockConfig::Psa(_) => Ok((h, w)),
        }
    }
}

impl Accounting for BlockConfig {
    fn param_count(&self) -> u64 {
        match self {
            BlockConfig::Conv(s) => s.param_count(),
            BlockConfig::Cib(c) => c.param_count(),
            BlockConfig::Psa(p) => p.param_count(),
            BlockConfig::ScDown(s) => s.param_count(),
        }
    }

    fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        match self {
            BlockConfig::Conv(s) => s.flop_count(height, width),
            BlockConfig::Cib(c) => c.flop_count(height, width),
            BlockConfig::Psa(p) => p.flop_count(height, width),
            BlockConfig::ScDown(s) => s.flop_count(height, width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// 1-based stage number.
    pub stage: usize,
    pub blocks: Vec<BlockConfig>,
}

/// A head attached to the output of `stage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleHead {
    pub stage: usize,
    pub config: HeadConfig,
}

/// Where the expensive blocks may appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPolicy {
    /// PSA may only sit at the tail of this stage or in later stages.
    pub psa_min_stage: usize,
    /// Large-kernel CIBs only from this stage on.
    pub large_kernel_min_stage: usize,
    /// Variants allowed to use large kernels; empty means any.
    pub large_kernel_variants: Vec<VariantName>,
}

impl Default for PlacementPolicy {
    fn default() -> Self {
        Self {
            psa_min_stage: 4,
            large_kernel_min_stage: 4,
            large_kernel_variants: vec![VariantName::N, VariantName::S],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub variant: Option<VariantName>,
    pub input_channels: usize,
    pub stages: Vec<StageConfig>,
    pub heads: Vec<ScaleHead>,
}

impl ModelDescription {
    /// Checks channel continuity, head wiring and the placement policy.
    pub fn validate(&self, policy: &PlacementPolicy) -> Result<()> {
        let mut channels = self.input_channels;
        let mut stage_out = Vec::new();
        let mut prev_stage = 0;
        for stage in &self.stages {
            if stage.stage <= prev_stage {
                return Err(Error::invalid(
                    "model description",
                    format!("stage numbers must increase, got {} after {prev_stage}", stage.stage),
                ));
            }
            prev_stage = stage.stage;
            let last_non_psa = stage.blocks.iter().rposition(|b| !matches!(b, BlockConfig::Psa(_)));
            for (i, block) in stage.blocks.iter().enumerate() {
                if block.in_channels() != channels {
                    return Err(Error::invalid(
                        "model description",
                        format!(
                            "stage {} block {i} ({}) expects {} input channels but receives {channels}",
                            stage.stage,
                            block.name(),
                            block.in_channels()
                        ),
                    ));
                }
                channels = block.out_channels();
                match block {
                    BlockConfig::Psa(_) => {
                        let early = stage.stage < policy.psa_min_stage;
                        let mid_stage = stage.stage == policy.psa_min_stage && last_non_psa.is_some_and(|j| j > i);
                        if early || mid_stage {
                            return Err(Error::invalid(
                                "PSA placement",
                                format!(
                                    "stage {} block {i}: PSA is only allowed after stage {}",
                                    stage.stage, policy.psa_min_stage
                                ),
                            ));
                        }
                    }
                    BlockConfig::Cib(c) if c.large_kernel => {
                        if stage.stage < policy.large_kernel_min_stage {
                            return Err(Error::invalid(
                                "large-kernel placement",
                                format!(
                                    "stage {} block {i}: large kernels are reserved for stage {} and deeper",
                                    stage.stage, policy.large_kernel_min_stage
                                ),
                            ));
                        }
                        if let Some(v) = self.variant {
                            if !policy.large_kernel_variants.is_empty() && !policy.large_kernel_variants.contains(&v) {
                                return Err(Error::invalid(
                                    "large-kernel placement",
                                    format!("variant {v:?} does not use large kernels"),
                                ));
                            }
                        }
                    }
                    _ => {}
                }
            }
            stage_out.push((stage.stage, channels));
        }
        for head in &self.heads {
            let Some(&(_, c)) = stage_out.iter().find(|(s, _)| *s == head.stage) else {
                return Err(Error::invalid("model description", format!("head attached to unknown stage {}", head.stage)));
            };
            if c != head.config.in_channels {
                return Err(Error::invalid(
                    "model description",
                    format!(
                        "head on stage {} expects {} channels, stage outputs {c}",
                        head.stage, head.config.in_channels
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> u64 {
        let body: u64 = self.stages.iter().flat_map(|s| &s.blocks).map(Accounting::param_count).sum();
        body + self.heads.iter().map(|h| h.config.param_count()).sum::<u64>()
    }

    pub fn flop_count(&self, height: usize, width: usize) -> Result<u64> {
        let (mut h, mut w) = (height, width);
        let mut total = 0;
        let mut sizes = Vec::new();
        for stage in &self.stages {
            for block in &stage.blocks {
                total += block.flop_count(h, w)?;
                (h, w) = block.output_size(h, w)?;
            }
            sizes.push((stage.stage, h, w));
        }
        for head in &self.heads {
            let &(_, hh, hw) = sizes
                .iter()
                .find(|(s, _, _)| *s == head.stage)
                .ok_or_else(|| Error::invalid("model description", format!("head attached to unknown stage {}", head.stage)))?;
            total += head.config.flop_count(hh, hw)?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    N,
    S,
    M,
    L,
    X,
}

/// Scaling of one model size together with its published complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: VariantName,
    pub depth_multiple: f64,
    pub width_multiple: f64,
    pub max_channels: usize,
    /// Reference parameter count, millions.
    pub reference_params_m: f64,
    /// Reference FLOPs at 640x640, billions.
    pub reference_gflops: f64,
}

impl VariantSpec {
    pub const ALL: [VariantSpec; 5] = [
        VariantSpec::row(VariantName::N, 0.33, 0.25, 1024, 2.7, 8.2),
        VariantSpec::row(VariantName::S, 0.33, 0.50, 1024, 8.0, 24.5),
        VariantSpec::row(VariantName::M, 0.67, 0.75, 768, 16.5, 63.5),
        VariantSpec::row(VariantName::L, 1.00, 1.00, 512, 25.7, 126.4),
        VariantSpec::row(VariantName::X, 1.00, 1.25, 512, 31.6, 169.9),
    ];

    const fn row(name: VariantName, d: f64, w: f64, max_channels: usize, params: f64, gflops: f64) -> Self {
        Self {
            name,
            depth_multiple: d,
            width_multiple: w,
            max_channels,
            reference_params_m: params,
            reference_gflops: gflops,
        }
    }

    pub fn get(name: VariantName) -> Self {
        *Self::ALL.iter().find(|v| v.name == name).expect("every variant has a row")
    }

    fn width(&self, channels: usize) -> usize {
        let scaled = channels.min(self.max_channels) as f64 * self.width_multiple;
        (scaled / 8.0).ceil() as usize * 8
    }

    fn depth(&self, n: usize) -> usize {
        ((n as f64 * self.depth_multiple).round() as usize).max(1)
    }

    /// A backbone plus three decoupled heads (strides 8, 16, 32) scaled by
    /// this variant's multipliers. There is no feature-pyramid neck.
    pub fn describe(&self, num_classes: usize) -> Result<ModelDescription> {
        let c1 = self.width(64);
        let c2 = self.width(128);
        let c3 = self.width(256);
        let c4 = self.width(512);
        let c5 = self.width(1024);
        let large = matches!(self.name, VariantName::N | VariantName::S);
        let conv = |cin, cout| -> Result<BlockConfig> { Ok(BlockConfig::Conv(ConvShape::new(ConvSpec::standard(cin, cout, 3, 2)?, true)?)) };
        let cibs = |c, n, lk| -> Result<Vec<BlockConfig>> {
            (0..n).map(|_| Ok(BlockConfig::Cib(CibConfig::new(c, 2.0, lk)?))).collect()
        };

        let mut s1 = vec![conv(3, c1)?, conv(c1, c2)?];
        s1.extend(cibs(c2, self.depth(3), false)?);
        let mut s2 = vec![conv(c2, c3)?];
        s2.extend(cibs(c3, self.depth(6), false)?);
        let mut s3 = vec![BlockConfig::ScDown(ScDownConfig::new(c3, c4)?)];
        s3.extend(cibs(c4, self.depth(6), false)?);
        let mut s4 = vec![BlockConfig::ScDown(ScDownConfig::new(c4, c5)?)];
        s4.extend(cibs(c5, self.depth(3), large)?);
        s4.push(BlockConfig::Psa(PsaConfig::new(c5, (c5 / 128).max(1))?));

        let cls_hidden = c3.max(num_classes.min(100));
        let reg_hidden = (c3 / 4).max(16);
        let head = |stage, c| -> Result<ScaleHead> {
            Ok(ScaleHead {
                stage,
                config: HeadConfig::new(c, cls_hidden, reg_hidden, num_classes)?,
            })
        };

        Ok(ModelDescription {
            variant: Some(self.name),
            input_channels: 3,
            stages: vec![
                StageConfig { stage: 1, blocks: s1 },
                StageConfig { stage: 2, blocks: s2 },
                StageConfig { stage: 3, blocks: s3 },
                StageConfig { stage: 4, blocks: s4 },
            ],
            heads: vec![head(2, c3)?, head(3, c4)?, head(4, c5)?],
        })
    }
}

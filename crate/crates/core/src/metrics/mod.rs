//! Detection metrics: IoU matching, average precision, mAP@50 and
//! mAP@50-95, and precision/recall/F1 sweeps over confidence.
//!
//! Conventions, all deterministic and independent of input order:
//!
//! - Within an image, predictions are matched in descending confidence, equal
//!   confidences ordered by class and then box coordinates
//!   ([`Detection::rank_cmp`](crate::Detection::rank_cmp)).
//! - Precision/recall points are taken only at distinct confidence values, so
//!   tied predictions enter the curve together.
//! - AP is COCO-style 101-point interpolation by default; all-point
//!   integration is available.
//! - Precision is 0 at a confidence where nothing is predicted; recall is 0
//!   for a class without ground truth.
//! - mAP averages over classes that have ground truth.

mod ap;
mod curves;
mod evaluate;
mod matching;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::bbox::{iou, BoundingBox};
pub use ap::{average_precision, average_precision_scored, pr_points, PrPoint};
pub use curves::{curve_export, CurveFormat, CurveRow, Curves, PrRow};
pub use evaluate::{evaluate, ClassReport, EvalReport, ImageRecord, Sweep, REPORT_SCHEMA_VERSION};
pub use matching::{match_detections, MatchResult};

/// How the precision envelope is turned into a single AP number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "points", rename_all = "snake_case")]
pub enum Interpolation {
    /// Mean of the envelope sampled at `n` evenly spaced recall values in `[0, 1]`.
    RecallPoints(usize),
    /// Exact area under the envelope.
    AllPoints,
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::RecallPoints(101)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub interpolation: Interpolation,
    pub confidence_grid: Vec<f64>,
    /// Fixed operating point reported alongside the best F1.
    pub fixed_confidence: f64,
    /// Class whose recall at the best-F1 confidence is reported as the headline sensitivity.
    pub sensitivity_class: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            interpolation: Interpolation::default(),
            confidence_grid: (0..=1000).map(|i| i as f64 / 1000.0).collect(),
            fixed_confidence: 0.25,
            sensitivity_class: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() {
            return Err(Error::invalid("IoU thresholds", "at least one threshold is required"));
        }
        if t.iter().any(|v| !(*v > 0.0 && *v < 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("IoU thresholds", format!("{t:?} must be strictly increasing within (0, 1)")));
        }
        if let Interpolation::RecallPoints(n) = self.interpolation {
            if n < 2 {
                return Err(Error::invalid("interpolation", format!("need at least 2 recall points, got {n}")));
            }
        }
        let g = &self.confidence_grid;
        if g.is_empty() || g.iter().any(|v| !(0.0..=1.0).contains(v)) || g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("confidence grid", "must be non-empty, strictly increasing, within [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.fixed_confidence) {
            return Err(Error::invalid("fixed confidence", format!("{} not in [0, 1]", self.fixed_confidence)));
        }
        Ok(())
    }

    /// Index of the threshold used for AP50 and the sweeps: 0.50 if present,
    /// otherwise the lowest threshold.
    pub fn sweep_threshold_index(&self) -> usize {
        self.iou_thresholds.iter().position(|&t| t == 0.5).unwrap_or(0)
    }
}

/// Harmonic mean `2PR / (P + R)`; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

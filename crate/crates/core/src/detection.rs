use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// A final, scored detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_id: usize, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid("detection confidence", format!("{confidence} not in [0, 1]")));
        }
        bbox.validate()?;
        Ok(Self {
            bbox,
            class_id,
            confidence,
        })
    }

    /// Descending confidence, then class, then box coordinates.
    ///
    /// Every evaluation and suppression pass ranks detections with this order so
    /// results never depend on how equal-confidence inputs were listed.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .confidence
            .total_cmp(&self.confidence)
            .then(self.class_id.cmp(&other.class_id))
            .then(self.bbox.total_cmp(&other.bbox))
    }
}

/// A ground-truth object. Boxes are clipped to the unit square on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GTInstance {
    pub bbox: BoundingBox,
    pub class_id: usize,
}

impl GTInstance {
    pub fn new(bbox: BoundingBox, class_id: usize) -> Result<Self> {
        bbox.validate()?;
        let bbox = bbox.clamp_unit();
        if bbox.w <= 0.0 || bbox.h <= 0.0 {
            return Err(Error::invalid("ground-truth box", format!("zero-area box {bbox:?}")));
        }
        Ok(Self { bbox, class_id })
    }
}

//! Turning head outputs into detections.
//!
//! [`decode_nms_free`] is what a one-to-one head needs: per cell, take the best
//! class, threshold, sort, truncate. No overlap suppression happens.
//! [`nms_greedy`] is the classical baseline for one-to-many heads.

use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BoundingBox};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub confidence_threshold: f64,
    pub max_detections: usize,
    /// Only used by the NMS baseline.
    pub nms_iou_threshold: f64,
    /// Treat class maps as logits and squash them with a sigmoid first.
    pub apply_sigmoid: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.25,
            max_detections: 300,
            nms_iou_threshold: 0.7,
            apply_sigmoid: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::invalid(
                "confidence threshold",
                format!("{} not in [0, 1]", self.confidence_threshold),
            ));
        }
        if self.max_detections == 0 {
            return Err(Error::invalid("max detections", "must be >= 1"));
        }
        if !(self.nms_iou_threshold > 0.0 && self.nms_iou_threshold < 1.0) {
            return Err(Error::invalid(
                "NMS IoU threshold",
                format!("{} not in (0, 1)", self.nms_iou_threshold),
            ));
        }
        Ok(())
    }
}

/// Detection with the grid cell it was decoded from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDetection {
    pub cell: usize,
    pub detection: Detection,
}

/// Decodes `cls [num_classes, H, W]` and `box [4, H, W]` maps.
///
/// Box channels hold normalized `(cx, cy, w, h)` directly. Confidence ties are
/// broken by the lower cell index, class ties by the lower class id.
pub fn decode_nms_free(cls: &Tensor, boxes: &Tensor, cfg: &DecodeConfig) -> Result<Vec<Detection>> {
    Ok(decode_cells(cls, boxes, cfg)?.into_iter().map(|c| c.detection).collect())
}

pub fn decode_cells(cls: &Tensor, boxes: &Tensor, cfg: &DecodeConfig) -> Result<Vec<CellDetection>> {
    cfg.validate()?;
    let (nc, h, w) = cls.dims3()?;
    let (bc, bh, bw) = boxes.dims3()?;
    if bc != 4 {
        return Err(Error::shape("decode", "box channels", 4, bc));
    }
    if (bh, bw) != (h, w) {
        return Err(Error::shape("decode", "box map spatial size", format!("{h}x{w}"), format!("{bh}x{bw}")));
    }
    let plane = h * w;
    let mut out = Vec::new();
    for cell in 0..plane {
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..nc {
            let mut v = cls.data()[c * plane + cell];
            if cfg.apply_sigmoid {
                v = 1.0 / (1.0 + (-v).exp());
            }
            if v > best.1 {
                best = (c, v);
            }
        }
        let (class_id, confidence) = best;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(
                "class map",
                format!("cell {cell} has confidence {confidence} outside [0, 1]; pass logits with sigmoid enabled"),
            ));
        }
        if confidence < cfg.confidence_threshold {
            continue;
        }
        let b = |k: usize| boxes.data()[k * plane + cell];
        let bbox = BoundingBox::new(b(0), b(1), b(2), b(3))
            .map_err(|e| Error::invalid("box map", format!("cell {cell}: {e}")))?;
        out.push(CellDetection {
            cell,
            detection: Detection::new(bbox, class_id, confidence)?,
        });
    }
    out.sort_by(|a, b| {
        b.detection
            .confidence
            .total_cmp(&a.detection.confidence)
            .then(a.cell.cmp(&b.cell))
    });
    out.truncate(cfg.max_detections);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmsMode {
    /// Only same-class detections suppress each other.
    #[default]
    ClassAware,
    ClassAgnostic,
}

/// Class-aware greedy NMS.
pub fn nms_greedy(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_greedy_with(dets, iou_threshold, NmsMode::ClassAware)
}

/// Repeatedly keeps the most confident remaining detection and drops the ones
/// overlapping it with IoU above `iou_threshold`. Equal confidences keep
/// input order. Output is in keep order (descending confidence).
pub fn nms_greedy_with(dets: &[Detection], iou_threshold: f64, mode: NmsMode) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|k| {
            (mode == NmsMode::ClassAgnostic || k.class_id == d.class_id) && iou(&k.bbox, &d.bbox) > iou_threshold
        });
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(cx: f64, class_id: usize, confidence: f64) -> Detection {
        Detection::new(BoundingBox::new(cx, 0.5, 0.2, 0.2).unwrap(), class_id, confidence).unwrap()
    }

    fn maps(scores: &[[f64; 2]]) -> (Tensor, Tensor) {
        let n = scores.len();
        let cls = Tensor::from_fn(&[2, 1, n], |i| scores[i % n][i / n]).unwrap();
        let boxes = Tensor::from_fn(&[4, 1, n], |i| match i / n {
            0 => (i % n) as f64 / n as f64,
            1 => 0.5,
            _ => 0.1,
        })
        .unwrap();
        (cls, boxes)
    }

    #[test]
    fn below_threshold_is_empty() {
        let (cls, boxes) = maps(&[[0.1, 0.2], [0.05, 0.0]]);
        assert!(decode_nms_free(&cls, &boxes, &DecodeConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn single_cell_above_threshold() {
        let (cls, boxes) = maps(&[[0.1, 0.2], [0.3, 0.9], [0.0, 0.0]]);
        let out = decode_nms_free(&cls, &boxes, &DecodeConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class_id, 1);
        assert_eq!(out[0].confidence, 0.9);
        assert_eq!(out[0].bbox.cx, 1.0 / 3.0);
    }

    #[test]
    fn overlapping_cells_are_not_suppressed() {
        let (cls, _) = maps(&[[0.8, 0.0], [0.9, 0.0]]);
        let boxes = Tensor::from_fn(&[4, 1, 2], |i| if i < 4 { 0.5 } else { 0.2 }).unwrap();
        let out = decode_nms_free(&cls, &boxes, &DecodeConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn shape_mismatch_and_logits() {
        let (cls, _) = maps(&[[0.8, 0.0]]);
        let bad = Tensor::zeros(&[3, 1, 1]).unwrap();
        assert!(decode_nms_free(&cls, &bad, &DecodeConfig::default()).is_err());
        let logits = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let boxes = Tensor::new(vec![4, 1, 1], vec![0.5, 0.5, 0.1, 0.1]).unwrap();
        assert!(decode_nms_free(&logits, &boxes, &DecodeConfig::default()).is_err());
        let cfg = DecodeConfig {
            apply_sigmoid: true,
            ..Default::default()
        };
        let out = decode_nms_free(&logits, &boxes, &cfg).unwrap();
        assert!((out[0].confidence - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn nms_examples() {
        let same = [det(0.5, 0, 0.8), det(0.5, 0, 0.9)];
        assert_eq!(nms_greedy(&same, 0.5), vec![same[1]]);
        let disjoint = [det(0.2, 0, 0.8), det(0.8, 0, 0.9)];
        assert_eq!(nms_greedy(&disjoint, 0.5).len(), 2);
        let other_class = [det(0.5, 0, 0.8), det(0.5, 1, 0.9)];
        assert_eq!(nms_greedy(&other_class, 0.5).len(), 2);
        assert_eq!(nms_greedy_with(&other_class, 0.5, NmsMode::ClassAgnostic).len(), 1);
    }
}

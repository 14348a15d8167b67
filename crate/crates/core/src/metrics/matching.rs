use crate::bbox::iou;
use crate::detection::{Detection, GTInstance};

/// Outcome of matching one image's predictions to its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Per prediction, in input order: true positive?
    pub pred_tp: Vec<bool>,
    /// Per ground truth, in input order: claimed by a prediction?
    pub gt_matched: Vec<bool>,
}

/// Greedy matching at a single IoU threshold.
///
/// Predictions are visited by [`Detection::rank_cmp`]. Each one claims the
/// still-unclaimed ground truth of its class with the highest IoU, provided
/// that IoU is at least `iou_threshold` (equal IoUs go to the lower gt
/// index). Otherwise it is a false positive.
pub fn match_detections(preds: &[Detection], gts: &[GTInstance], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].rank_cmp(&preds[b]));
    let mut pred_tp = vec![false; preds.len()];
    let mut gt_matched = vec![false; gts.len()];
    for pi in order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_matched[gi] || g.class_id != p.class_id {
                continue;
            }
            let v = iou(&p.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            gt_matched[gi] = true;
            pred_tp[pi] = true;
        }
    }
    MatchResult { pred_tp, gt_matched }
}

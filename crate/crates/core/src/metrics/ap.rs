use serde::{Deserialize, Serialize};

use super::Interpolation;

/// One operating point of a precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Predictions with confidence >= this value are kept.
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall after each distinct confidence, highest first.
///
/// `scored` holds `(confidence, is_tp)` pairs in any order. Recall is 0 when
/// `num_gt == 0`.
pub fn pr_points(scored: &[(f64, bool)], num_gt: usize) -> Vec<PrPoint> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (i, &(conf, hit)) in sorted.iter().enumerate() {
        seen += 1;
        tp += hit as usize;
        if sorted.get(i + 1).is_none_or(|next| next.0 != conf) {
            points.push(PrPoint {
                confidence: conf,
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                precision: tp as f64 / seen as f64,
            });
        }
    }
    points
}

/// AP of a ranked list of TP/FP flags, one operating point per flag.
///
/// Returns `None` when there is neither ground truth nor any prediction (the
/// class is excluded), and `Some(0.0)` when only one of them is empty.
pub fn average_precision(tp_flags: &[bool], num_gt: usize, interpolation: Interpolation) -> Option<f64> {
    let mut seen = 0usize;
    let mut tp = 0usize;
    let points: Vec<PrPoint> = tp_flags
        .iter()
        .map(|&hit| {
            seen += 1;
            tp += hit as usize;
            PrPoint {
                confidence: f64::NAN,
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                precision: tp as f64 / seen as f64,
            }
        })
        .collect();
    ap_from_points(&points, num_gt, tp_flags.is_empty(), interpolation)
}

/// AP of `(confidence, is_tp)` pairs in any order, tied confidences grouped.
pub fn average_precision_scored(scored: &[(f64, bool)], num_gt: usize, interpolation: Interpolation) -> Option<f64> {
    ap_from_points(&pr_points(scored, num_gt), num_gt, scored.is_empty(), interpolation)
}

fn ap_from_points(points: &[PrPoint], num_gt: usize, no_preds: bool, interpolation: Interpolation) -> Option<f64> {
    if num_gt == 0 {
        return if no_preds { None } else { Some(0.0) };
    }
    if no_preds {
        return Some(0.0);
    }
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let ap = match interpolation {
        Interpolation::RecallPoints(n) => {
            let mut sum = 0.0;
            let mut i = 0;
            for k in 0..n {
                let r = k as f64 / (n - 1) as f64;
                while i < points.len() && points[i].recall < r {
                    i += 1;
                }
                if i < points.len() {
                    sum += envelope[i];
                }
            }
            sum / n as f64
        }
        Interpolation::AllPoints => {
            let mut prev = 0.0;
            let mut sum = 0.0;
            for (p, env) in points.iter().zip(&envelope) {
                sum += (p.recall - prev) * env;
                prev = p.recall;
            }
            sum
        }
    };
    Some(ap)
}

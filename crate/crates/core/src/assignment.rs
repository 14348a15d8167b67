//! Dual label assignment.
//!
//! Each ground-truth/prediction pair is scored with the alignment metric
//! `s^alpha * u^beta`, where `s` is the prediction's score for the ground
//! truth's class and `u` their IoU. Pairs with a zero metric are never matched.
//!
//! One-to-one assignment walks all pairs in descending metric order (ties:
//! lower gt index, then lower pred index) and keeps a pair when neither side
//! is taken yet. One-to-many assignment repeats that walk `topk` times over
//! the predictions still free, each round giving every ground truth at most
//! one more prediction. Its first round is exactly the one-to-one result, so
//! every one-to-one match is also a one-to-many match under the same
//! parameters. A prediction wanted by several ground truths within a round
//! goes to the one with the higher metric; the loser moves on to its next
//! best prediction.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BoundingBox};
use crate::detection::GTInstance;
use crate::error::{Error, Result};

/// Per-location prediction considered for assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredCandidate {
    pub bbox: BoundingBox,
    pub class_scores: Vec<f64>,
    /// Grid cell the prediction came from.
    pub source: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentParams {
    pub alpha: f64,
    pub beta: f64,
    pub topk: usize,
}

impl Default for AssignmentParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 6.0,
            topk: 10,
        }
    }
}

impl AssignmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid("alpha", format!("{} must be finite and >= 0", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", format!("{} must be finite and >= 0", self.beta)));
        }
        if self.topk == 0 {
            return Err(Error::invalid("topk", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    OneToMany,
    OneToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt: usize,
    pub pred: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// Sorted by gt index, then pred index.
    pub matches: Vec<Match>,
    pub mode: AssignmentMode,
    pub params: AssignmentParams,
    /// Digest of the ground truths and predictions the result was computed from.
    pub provenance: u64,
}

impl AssignmentResult {
    pub fn contains(&self, gt: usize, pred: usize) -> bool {
        self.matches.iter().any(|m| m.gt == gt && m.pred == pred)
    }
}

/// `score^alpha * iou^beta`.
pub fn alignment_metric(score: f64, iou: f64, p: &AssignmentParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid("class score", format!("{score} not in [0, 1]")));
    }
    if !(0.0..=1.0).contains(&iou) {
        return Err(Error::invalid("iou", format!("{iou} not in [0, 1]")));
    }
    Ok(score.powf(p.alpha) * iou.powf(p.beta))
}

fn validate_inputs(gts: &[GTInstance], preds: &[PredCandidate], p: &AssignmentParams) -> Result<()> {
    p.validate()?;
    let Some(first) = preds.first() else {
        return Ok(());
    };
    let num_classes = first.class_scores.len();
    for (i, pred) in preds.iter().enumerate() {
        if pred.class_scores.len() != num_classes {
            return Err(Error::shape(
                "assignment",
                format!("class scores of pred {i}"),
                num_classes,
                pred.class_scores.len(),
            ));
        }
        if let Some(s) = pred.class_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid("class score", format!("pred {i} has score {s} outside [0, 1]")));
        }
        pred.bbox.validate()?;
    }
    for (i, gt) in gts.iter().enumerate() {
        if gt.class_id >= num_classes {
            return Err(Error::invalid(
                "ground truth class",
                format!("gt {i} has class {} but predictions score {num_classes} classes", gt.class_id),
            ));
        }
    }
    Ok(())
}

fn provenance(gts: &[GTInstance], preds: &[PredCandidate]) -> u64 {
    let mut h = DefaultHasher::new();
    gts.len().hash(&mut h);
    for g in gts {
        g.class_id.hash(&mut h);
        for v in [g.bbox.cx, g.bbox.cy, g.bbox.w, g.bbox.h] {
            v.to_bits().hash(&mut h);
        }
    }
    preds.len().hash(&mut h);
    for pr in preds {
        pr.source.hash(&mut h);
        for v in [pr.bbox.cx, pr.bbox.cy, pr.bbox.w, pr.bbox.h].iter().chain(&pr.class_scores) {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// All pairs with a positive metric, best first.
fn ranked_pairs(gts: &[GTInstance], preds: &[PredCandidate], p: &AssignmentParams) -> Result<Vec<Match>> {
    let mut pairs = Vec::new();
    for (gi, gt) in gts.iter().enumerate() {
        for (pi, pred) in preds.iter().enumerate() {
            let score = alignment_metric(pred.class_scores[gt.class_id], iou(&gt.bbox, &pred.bbox), p)?;
            if score > 0.0 {
                pairs.push(Match { gt: gi, pred: pi, score });
            }
        }
    }
    pairs.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.gt.cmp(&b.gt)).then(a.pred.cmp(&b.pred)));
    Ok(pairs)
}

fn greedy_rounds(pairs: &[Match], num_gts: usize, num_preds: usize, rounds: usize) -> Vec<Match> {
    let mut pred_taken = vec![false; num_preds];
    let mut matches = Vec::new();
    for _ in 0..rounds {
        let mut gt_taken = vec![false; num_gts];
        let before = matches.len();
        for m in pairs {
            if !pred_taken[m.pred] && !gt_taken[m.gt] {
                pred_taken[m.pred] = true;
                gt_taken[m.gt] = true;
                matches.push(*m);
            }
        }
        if matches.len() == before {
            break;
        }
    }
    matches.sort_by_key(|m| (m.gt, m.pred));
    matches
}

fn assign(gts: &[GTInstance], preds: &[PredCandidate], p: &AssignmentParams, mode: AssignmentMode) -> Result<AssignmentResult> {
    validate_inputs(gts, preds, p)?;
    let pairs = ranked_pairs(gts, preds, p)?;
    let rounds = match mode {
        AssignmentMode::OneToOne => 1,
        AssignmentMode::OneToMany => p.topk,
    };
    Ok(AssignmentResult {
        matches: greedy_rounds(&pairs, gts.len(), preds.len(), rounds),
        mode,
        params: *p,
        provenance: provenance(gts, preds),
    })
}

pub fn assign_one_to_many(gts: &[GTInstance], preds: &[PredCandidate], p: &AssignmentParams) -> Result<AssignmentResult> {
    assign(gts, preds, p, AssignmentMode::OneToMany)
}

pub fn assign_one_to_one(gts: &[GTInstance], preds: &[PredCandidate], p: &AssignmentParams) -> Result<AssignmentResult> {
    assign(gts, preds, p, AssignmentMode::OneToOne)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    /// One-to-one matches missing from the one-to-many set.
    pub violations: Vec<Match>,
    pub params_match: bool,
}

/// Checks that every one-to-one match also appears among the one-to-many matches.
pub fn consistency_check(o2m: &AssignmentResult, o2o: &AssignmentResult) -> Result<ConsistencyReport> {
    if o2m.mode != AssignmentMode::OneToMany || o2o.mode != AssignmentMode::OneToOne {
        return Err(Error::invalid(
            "consistency check",
            format!("expected (one-to-many, one-to-one) results, got ({:?}, {:?})", o2m.mode, o2o.mode),
        ));
    }
    if o2m.provenance != o2o.provenance {
        return Err(Error::invalid(
            "consistency check",
            "results were computed from different ground truths or predictions",
        ));
    }
    let violations: Vec<Match> = o2o
        .matches
        .iter()
        .filter(|m| !o2m.contains(m.gt, m.pred))
        .copied()
        .collect();
    Ok(ConsistencyReport {
        consistent: violations.is_empty(),
        violations,
        params_match: o2m.params == o2o.params,
    })
}

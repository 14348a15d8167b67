use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision_scored, pr_points, PrPoint};
use super::matching::match_detections;
use super::{f1, EvalConfig, Interpolation};
use crate::detection::{Detection, GTInstance};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub preds: Vec<Detection>,
    pub gts: Vec<GTInstance>,
}

/// Precision, recall and F1 at each confidence of the report's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub name: String,
    pub num_gt: usize,
    pub num_pred: usize,
    /// AP per IoU threshold; `None` when the class has neither gt nor predictions.
    pub ap: Vec<Option<f64>>,
    pub ap50: Option<f64>,
    pub ap50_95: Option<f64>,
    /// Recall at the overall best-F1 confidence.
    pub sensitivity: f64,
    pub precision_at_best_f1: f64,
    pub pr_curve: Vec<PrPoint>,
    pub sweep: Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub num_images: usize,
    pub num_classes: usize,
    pub iou_thresholds: Vec<f64>,
    pub interpolation: Interpolation,
    pub sweep_iou_threshold: f64,
    /// Number of classes with ground truth; the mAP denominators.
    pub classes_evaluated: usize,
    pub map50: f64,
    pub map50_95: f64,
    pub best_f1: f64,
    pub best_f1_confidence: f64,
    pub precision_at_best_f1: f64,
    pub recall_at_best_f1: f64,
    pub fixed_confidence: f64,
    pub f1_at_fixed_confidence: f64,
    pub precision_at_fixed_confidence: f64,
    pub recall_at_fixed_confidence: f64,
    pub sensitivity_class: Option<usize>,
    pub sensitivity: Option<f64>,
    pub confidence_grid: Vec<f64>,
    pub overall: Sweep,
    pub classes: Vec<ClassReport>,
}

/// Counts at or above a confidence, from ascending-sorted confidences.
struct Counter {
    all: Vec<f64>,
    tp: Vec<f64>,
    num_gt: usize,
}

impl Counter {
    fn new(scored: &[(f64, bool)], num_gt: usize) -> Self {
        let mut all: Vec<f64> = scored.iter().map(|s| s.0).collect();
        let mut tp: Vec<f64> = scored.iter().filter(|s| s.1).map(|s| s.0).collect();
        all.sort_by(f64::total_cmp);
        tp.sort_by(f64::total_cmp);
        Self { all, tp, num_gt }
    }

    /// `(tp, predicted)` among confidences >= `t`.
    fn at(&self, t: f64) -> (usize, usize) {
        let above = |v: &[f64]| v.len() - v.partition_point(|&x| x < t);
        (above(&self.tp), above(&self.all))
    }
}

fn prf(tp: usize, predicted: usize, num_gt: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let r = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
    (p, r, f1(p, r))
}

fn sweep(grid: &[f64], point: impl Fn(f64) -> (usize, usize, usize)) -> Sweep {
    let mut s = Sweep {
        precision: Vec::with_capacity(grid.len()),
        recall: Vec::with_capacity(grid.len()),
        f1: Vec::with_capacity(grid.len()),
    };
    for &t in grid {
        let (tp, n, g) = point(t);
        let (p, r, f) = prf(tp, n, g);
        s.precision.push(p);
        s.recall.push(r);
        s.f1.push(f);
    }
    s
}

fn validate_records(images: &[ImageRecord], num_classes: usize) -> Result<()> {
    for img in images {
        for d in &img.preds {
            if d.class_id >= num_classes {
                return Err(Error::invalid(
                    "prediction",
                    format!("image {:?}: class {} outside 0..{num_classes}", img.id, d.class_id),
                ));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::invalid(
                    "prediction",
                    format!("image {:?}: confidence {} not in [0, 1]", img.id, d.confidence),
                ));
            }
        }
        for g in &img.gts {
            if g.class_id >= num_classes {
                return Err(Error::invalid(
                    "ground truth",
                    format!("image {:?}: class {} outside 0..{num_classes}", img.id, g.class_id),
                ));
            }
        }
    }
    Ok(())
}

/// Evaluates predictions against ground truth over the class universe
/// `class_names`.
///
/// Images are matched in parallel; the result does not depend on image order,
/// prediction order within an image, or the number of worker threads.
pub fn evaluate(images: &[ImageRecord], class_names: &[String], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let num_classes = class_names.len();
    if num_classes == 0 {
        return Err(Error::invalid("class list", "at least one class is required"));
    }
    if images.is_empty() {
        return Err(Error::invalid("dataset", "no images to evaluate"));
    }
    if let Some(c) = cfg.sensitivity_class {
        if c >= num_classes {
            return Err(Error::invalid("sensitivity class", format!("{c} outside 0..{num_classes}")));
        }
    }
    validate_records(images, num_classes)?;
    let nt = cfg.iou_thresholds.len();

    let matched: Vec<Vec<Vec<bool>>> = images
        .par_iter()
        .map(|img| {
            cfg.iou_thresholds
                .iter()
                .map(|&t| match_detections(&img.preds, &img.gts, t).pred_tp)
                .collect()
        })
        .collect();

    // scored[threshold][class] -> (confidence, tp)
    let mut scored = vec![vec![Vec::<(f64, bool)>::new(); num_classes]; nt];
    let mut num_gt = vec![0usize; num_classes];
    for (img, flags) in images.iter().zip(&matched) {
        for g in &img.gts {
            num_gt[g.class_id] += 1;
        }
        for (ti, tps) in flags.iter().enumerate() {
            for (d, &hit) in img.preds.iter().zip(tps) {
                scored[ti][d.class_id].push((d.confidence, hit));
            }
        }
    }

    let si = cfg.sweep_threshold_index();
    let grid = &cfg.confidence_grid;
    let counters: Vec<Counter> = (0..num_classes).map(|c| Counter::new(&scored[si][c], num_gt[c])).collect();
    let total_gt: usize = num_gt.iter().sum();
    let pooled = |t: f64| {
        counters.iter().fold((0, 0, total_gt), |(tp, n, g), c| {
            let (a, b) = c.at(t);
            (tp + a, n + b, g)
        })
    };
    let overall = sweep(grid, pooled);

    let mut best = 0;
    for (i, &v) in overall.f1.iter().enumerate() {
        if v > overall.f1[best] {
            best = i;
        }
    }
    let (fp, fr, ff) = {
        let (tp, n, g) = pooled(cfg.fixed_confidence);
        prf(tp, n, g)
    };

    let mut classes = Vec::with_capacity(num_classes);
    for (c, name) in class_names.iter().enumerate() {
        let ap: Vec<Option<f64>> = (0..nt)
            .map(|ti| average_precision_scored(&scored[ti][c], num_gt[c], cfg.interpolation))
            .collect();
        let ap50_95 = if ap.iter().all(Option::is_some) {
            Some(ap.iter().flatten().sum::<f64>() / nt as f64)
        } else {
            None
        };
        let counter = &counters[c];
        let class_sweep = sweep(grid, |t| {
            let (tp, n) = counter.at(t);
            (tp, n, counter.num_gt)
        });
        classes.push(ClassReport {
            class_id: c,
            name: name.clone(),
            num_gt: num_gt[c],
            num_pred: scored[si][c].len(),
            ap50: ap[si],
            ap50_95,
            ap,
            sensitivity: class_sweep.recall[best],
            precision_at_best_f1: class_sweep.precision[best],
            pr_curve: pr_points(&scored[si][c], num_gt[c]),
            sweep: class_sweep,
        });
    }

    let present: Vec<&ClassReport> = classes.iter().filter(|c| c.num_gt > 0).collect();
    let mean = |f: fn(&ClassReport) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    let map50 = mean(|c| c.ap50.unwrap_or(0.0));
    let map50_95 = mean(|c| c.ap50_95.unwrap_or(0.0));

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        num_images: images.len(),
        num_classes,
        iou_thresholds: cfg.iou_thresholds.clone(),
        interpolation: cfg.interpolation,
        sweep_iou_threshold: cfg.iou_thresholds[si],
        classes_evaluated: present.len(),
        map50,
        map50_95,
        best_f1: overall.f1[best],
        best_f1_confidence: grid[best],
        precision_at_best_f1: overall.precision[best],
        recall_at_best_f1: overall.recall[best],
        fixed_confidence: cfg.fixed_confidence,
        f1_at_fixed_confidence: ff,
        precision_at_fixed_confidence: fp,
        recall_at_fixed_confidence: fr,
        sensitivity_class: cfg.sensitivity_class,
        sensitivity: cfg.sensitivity_class.map(|c| classes[c].sensitivity),
        confidence_grid: grid.clone(),
        overall,
        classes,
    })
}

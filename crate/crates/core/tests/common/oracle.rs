//! Brute-force reference evaluator.
//!
//! Written from the metric definitions without sharing code with the library:
//! precision at every distinct confidence is recounted from scratch, and
//! interpolated precision is a direct maximum over all operating points.

#![allow(dead_code)]

use detkit_core::metrics::{ClassReport, EvalConfig, EvalReport, ImageRecord, Interpolation, PrPoint, Sweep};
use detkit_core::Detection;

fn corners(cx: f64, cy: f64, w: f64, h: f64) -> [f64; 4] {
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

pub fn box_iou(a: &detkit_core::BoundingBox, b: &detkit_core::BoundingBox) -> f64 {
    let p = corners(a.cx, a.cy, a.w, a.h);
    let q = corners(b.cx, b.cy, b.w, b.h);
    let iw = (p[2].min(q[2]) - p[0].max(q[0])).max(0.0);
    let ih = (p[3].min(q[3]) - p[1].max(q[1])).max(0.0);
    let inter = iw * ih;
    let area_p = (p[2] - p[0]) * (p[3] - p[1]);
    let area_q = (q[2] - q[0]) * (q[3] - q[1]);
    let union = area_p + area_q - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Visiting order: confidence descending, then class, then box coordinates.
fn visit_order(preds: &[Detection]) -> Vec<usize> {
    let key = |d: &Detection| (-d.confidence, d.class_id as f64, d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h);
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| key(&preds[a]).partial_cmp(&key(&preds[b])).unwrap());
    idx
}

/// TP flag per prediction (input order) at one IoU threshold.
pub fn image_tp_flags(img: &ImageRecord, thr: f64) -> Vec<bool> {
    let mut taken = vec![false; img.gts.len()];
    let mut tp = vec![false; img.preds.len()];
    for i in visit_order(&img.preds) {
        let d = &img.preds[i];
        let mut best_gt = usize::MAX;
        let mut best_iou = -1.0;
        for (j, g) in img.gts.iter().enumerate() {
            if taken[j] || g.class_id != d.class_id {
                continue;
            }
            let v = box_iou(&d.bbox, &g.bbox);
            if v >= thr && v > best_iou {
                best_iou = v;
                best_gt = j;
            }
        }
        if best_gt != usize::MAX {
            taken[best_gt] = true;
            tp[i] = true;
        }
    }
    tp
}

struct Scored {
    conf: f64,
    tp: bool,
}

fn counts_at(list: &[Scored], t: f64) -> (usize, usize) {
    let n = list.iter().filter(|s| s.conf >= t).count();
    let tp = list.iter().filter(|s| s.conf >= t && s.tp).count();
    (tp, n)
}

fn operating_points(list: &[Scored], num_gt: usize) -> Vec<PrPoint> {
    let mut confs: Vec<f64> = list.iter().map(|s| s.conf).collect();
    confs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    confs.dedup();
    confs
        .into_iter()
        .map(|c| {
            let (tp, n) = counts_at(list, c);
            PrPoint {
                confidence: c,
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                precision: tp as f64 / n as f64,
            }
        })
        .collect()
}

fn ap(list: &[Scored], num_gt: usize, interp: Interpolation) -> Option<f64> {
    match (num_gt, list.len()) {
        (0, 0) => return None,
        (0, _) | (_, 0) => return Some(0.0),
        _ => {}
    }
    let pts = operating_points(list, num_gt);
    let interp_at = |r: f64| {
        pts.iter()
            .filter(|p| p.recall >= r)
            .map(|p| p.precision)
            .fold(0.0, f64::max)
    };
    Some(match interp {
        Interpolation::RecallPoints(n) => (0..n).map(|k| interp_at(k as f64 / (n - 1) as f64)).sum::<f64>() / n as f64,
        Interpolation::AllPoints => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for p in &pts {
                area += (p.recall - prev) * interp_at(p.recall);
                prev = p.recall;
            }
            area
        }
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn oracle_evaluate(images: &[ImageRecord], names: &[String], cfg: &EvalConfig) -> EvalReport {
    let nc = names.len();
    let nt = cfg.iou_thresholds.len();
    let si = cfg.iou_thresholds.iter().position(|&t| t == 0.5).unwrap_or(0);
    // per[threshold][class]
    let mut per: Vec<Vec<Vec<Scored>>> = (0..nt).map(|_| (0..nc).map(|_| Vec::new()).collect()).collect();
    let mut num_gt = vec![0usize; nc];
    for img in images {
        for g in &img.gts {
            num_gt[g.class_id] += 1;
        }
        for (ti, &thr) in cfg.iou_thresholds.iter().enumerate() {
            let flags = image_tp_flags(img, thr);
            for (d, tp) in img.preds.iter().zip(flags) {
                per[ti][d.class_id].push(Scored { conf: d.confidence, tp });
            }
        }
    }
    let total_gt: usize = num_gt.iter().sum();
    let pooled_at = |t: f64| {
        let mut tp = 0;
        let mut n = 0;
        for list in &per[si] {
            let (a, b) = counts_at(list, t);
            tp += a;
            n += b;
        }
        let p = ratio(tp, n);
        let r = ratio(tp, total_gt);
        (p, r, harmonic(p, r))
    };
    let mut overall = Sweep {
        precision: vec![],
        recall: vec![],
        f1: vec![],
    };
    for &t in &cfg.confidence_grid {
        let (p, r, f) = pooled_at(t);
        overall.precision.push(p);
        overall.recall.push(r);
        overall.f1.push(f);
    }
    let best_f1 = overall.f1.iter().cloned().fold(f64::MIN, f64::max);
    let best = overall.f1.iter().position(|&f| f == best_f1).unwrap();
    let (fp, fr, ff) = pooled_at(cfg.fixed_confidence);

    let mut classes = Vec::new();
    for c in 0..nc {
        let aps: Vec<Option<f64>> = (0..nt).map(|ti| ap(&per[ti][c], num_gt[c], cfg.interpolation)).collect();
        let ap50_95 = if aps.iter().any(|a| a.is_none()) {
            None
        } else {
            Some(aps.iter().map(|a| a.unwrap()).sum::<f64>() / nt as f64)
        };
        let mut sweep = Sweep {
            precision: vec![],
            recall: vec![],
            f1: vec![],
        };
        for &t in &cfg.confidence_grid {
            let (tp, n) = counts_at(&per[si][c], t);
            let p = ratio(tp, n);
            let r = ratio(tp, num_gt[c]);
            sweep.precision.push(p);
            sweep.recall.push(r);
            sweep.f1.push(harmonic(p, r));
        }
        classes.push(ClassReport {
            class_id: c,
            name: names[c].clone(),
            num_gt: num_gt[c],
            num_pred: per[si][c].len(),
            ap50: aps[si],
            ap50_95,
            ap: aps,
            sensitivity: sweep.recall[best],
            precision_at_best_f1: sweep.precision[best],
            pr_curve: operating_points(&per[si][c], num_gt[c]),
            sweep,
        });
    }
    let evaluated: Vec<&ClassReport> = classes.iter().filter(|c| c.num_gt > 0).collect();
    let avg = |f: &dyn Fn(&ClassReport) -> f64| {
        if evaluated.is_empty() {
            0.0
        } else {
            evaluated.iter().map(|c| f(c)).sum::<f64>() / evaluated.len() as f64
        }
    };
    let map50 = avg(&|c| c.ap50.unwrap());
    let map50_95 = avg(&|c| c.ap50_95.unwrap());
    EvalReport {
        schema_version: detkit_core::metrics::REPORT_SCHEMA_VERSION,
        num_images: images.len(),
        num_classes: nc,
        iou_thresholds: cfg.iou_thresholds.clone(),
        interpolation: cfg.interpolation,
        sweep_iou_threshold: cfg.iou_thresholds[si],
        classes_evaluated: evaluated.len(),
        map50,
        map50_95,
        best_f1,
        best_f1_confidence: cfg.confidence_grid[best],
        precision_at_best_f1: overall.precision[best],
        recall_at_best_f1: overall.recall[best],
        fixed_confidence: cfg.fixed_confidence,
        f1_at_fixed_confidence: ff,
        precision_at_fixed_confidence: fp,
        recall_at_fixed_confidence: fr,
        sensitivity_class: cfg.sensitivity_class,
        sensitivity: cfg.sensitivity_class.map(|c| classes[c].sensitivity),
        confidence_grid: cfg.confidence_grid.clone(),
        overall,
        classes,
    }
}

/// Largest absolute difference over all numeric leaves of two reports, or an
/// error naming the first structural mismatch.
pub fn max_report_diff(a: &EvalReport, b: &EvalReport) -> Result<f64, String> {
    let va = serde_json::to_value(a).unwrap();
    let vb = serde_json::to_value(b).unwrap();
    let mut worst = 0.0f64;
    walk(&va, &vb, "$", &mut worst)?;
    Ok(worst)
}

fn walk(a: &serde_json::Value, b: &serde_json::Value, path: &str, worst: &mut f64) -> Result<(), String> {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => {
            let d = (x.as_f64().unwrap() - y.as_f64().unwrap()).abs();
            *worst = worst.max(d);
            Ok(())
        }
        (Array(x), Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                walk(p, q, &format!("{path}[{i}]"), worst)?;
            }
            Ok(())
        }
        (Object(x), Object(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: field count {} vs {}", x.len(), y.len()));
            }
            for (k, p) in x {
                let q = y.get(k).ok_or_else(|| format!("{path}.{k} missing"))?;
                walk(p, q, &format!("{path}.{k}"), worst)?;
            }
            Ok(())
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

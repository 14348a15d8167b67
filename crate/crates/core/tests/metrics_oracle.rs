mod common;

use common::gen::{class_names, micro_dataset, random_box};
use common::oracle::{image_tp_flags, max_report_diff, oracle_evaluate};
use detkit_core::metrics::{
    average_precision, evaluate, match_detections, EvalConfig, ImageRecord, Interpolation,
};
use detkit_core::{Detection, GTInstance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn evaluator_matches_brute_force_on_500_seeds() {
    let mut worst = 0.0f64;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = rng.random_range(1..=3);
        let images = micro_dataset(&mut rng, nc);
        let names = class_names(nc);
        let mut cfg = EvalConfig::default();
        if seed % 2 == 1 {
            cfg.interpolation = Interpolation::AllPoints;
        }
        cfg.sensitivity_class = Some(seed as usize % nc);
        let got = evaluate(&images, &names, &cfg).unwrap();
        let want = oracle_evaluate(&images, &names, &cfg);
        let d = max_report_diff(&got, &want).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        worst = worst.max(d);
    }
    assert!(worst <= 1e-9, "max abs diff {worst}");
}

#[test]
fn matcher_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..500 {
        let images = micro_dataset(&mut rng, 2);
        for img in &images {
            for thr in [0.5, 0.75, 0.95] {
                let got = match_detections(&img.preds, &img.gts, thr);
                assert_eq!(got.pred_tp, image_tp_flags(img, thr));
                assert_eq!(got.gt_matched.iter().filter(|&&m| m).count(), got.pred_tp.iter().filter(|&&t| t).count());
            }
        }
    }
}

#[test]
fn strict_thresholds_never_score_higher() {
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let images = micro_dataset(&mut rng, 2);
        let r = evaluate(&images, &class_names(2), &EvalConfig::default()).unwrap();
        assert!(r.map50_95 <= r.map50 + 1e-12, "seed {seed}: {} > {}", r.map50_95, r.map50);
        for c in &r.classes {
            if let (Some(a), Some(b)) = (c.ap50_95, c.ap50) {
                assert!(a <= b + 1e-12);
            }
        }
    }
}

#[test]
fn permuting_images_and_predictions_changes_nothing() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let images = micro_dataset(&mut rng, 3);
        let names = class_names(3);
        let cfg = EvalConfig::default();
        let base = evaluate(&images, &names, &cfg).unwrap();
        let mut shuffled = images.clone();
        shuffled.shuffle(&mut rng);
        for img in &mut shuffled {
            img.preds.shuffle(&mut rng);
            img.gts.shuffle(&mut rng);
        }
        let other = evaluate(&shuffled, &names, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&base).unwrap(), serde_json::to_string(&other).unwrap());
    }
}

#[test]
fn perfect_and_empty_detectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let names = class_names(2);
    let images: Vec<ImageRecord> = (0..4)
        .map(|i| {
            let gts: Vec<GTInstance> = (0..3).map(|k| GTInstance::new(random_box(&mut rng), k % 2).unwrap()).collect();
            ImageRecord { id: format!("i{i}"), preds: vec![], gts }
        })
        .collect();
    let cfg = EvalConfig::default();

    let empty = evaluate(&images, &names, &cfg).unwrap();
    assert_eq!(empty.map50, 0.0);
    assert_eq!(empty.map50_95, 0.0);
    assert_eq!(empty.best_f1, 0.0);

    let perfect: Vec<ImageRecord> = images
        .iter()
        .map(|img| ImageRecord {
            preds: img.gts.iter().map(|g| Detection::new(g.bbox, g.class_id, 0.9).unwrap()).collect(),
            ..img.clone()
        })
        .collect();
    let r = evaluate(&perfect, &names, &cfg).unwrap();
    assert_eq!(r.map50, 1.0);
    assert_eq!(r.map50_95, 1.0);
    assert_eq!(r.best_f1, 1.0);
    assert_eq!(r.recall_at_fixed_confidence, 1.0);
}

#[test]
fn no_ground_truth_at_all() {
    let names = class_names(2);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let images = vec![ImageRecord {
        id: "a".into(),
        preds: vec![Detection::new(random_box(&mut rng), 1, 0.7).unwrap()],
        gts: vec![],
    }];
    let r = evaluate(&images, &names, &EvalConfig::default()).unwrap();
    assert_eq!(r.classes_evaluated, 0);
    assert_eq!(r.map50, 0.0);
    assert_eq!(r.classes[0].ap50, None);
    assert_eq!(r.classes[1].ap50, Some(0.0));
}

#[test]
fn envelope_on_tp_fp_tp() {
    // recall 0.5 @ p 1, 0.5 @ p 0.5, 1.0 @ p 2/3
    let flags = [true, false, true];
    let all = average_precision(&flags, 2, Interpolation::AllPoints).unwrap();
    assert!((all - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    let r101 = average_precision(&flags, 2, Interpolation::RecallPoints(101)).unwrap();
    let want = (51.0 * 1.0 + 50.0 * 2.0 / 3.0) / 101.0;
    assert!((r101 - want).abs() < 1e-12, "{r101} vs {want}");
    assert_eq!(average_precision(&[], 0, Interpolation::AllPoints), None);
    assert_eq!(average_precision(&[false], 0, Interpolation::AllPoints), Some(0.0));
    assert_eq!(average_precision(&[], 3, Interpolation::AllPoints), Some(0.0));
}

#[test]
fn turning_a_false_positive_into_a_hit_never_lowers_ap() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..2000 {
        let n = rng.random_range(1..=12);
        let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let tp = flags.iter().filter(|&&f| f).count();
        let num_gt = tp + rng.random_range(1..=3);
        let Some(fp) = flags.iter().position(|&f| !f) else { continue };
        for interp in [Interpolation::AllPoints, Interpolation::RecallPoints(101)] {
            let before = average_precision(&flags, num_gt, interp).unwrap();
            let mut better = flags.clone();
            better[fp] = true;
            let after = average_precision(&better, num_gt, interp).unwrap();
            assert!(after >= before - 1e-12, "{flags:?} {before} -> {after}");
        }
    }
}

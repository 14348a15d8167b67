//! Random inputs for oracle comparisons.

#![allow(dead_code)]

use detkit_core::metrics::ImageRecord;
use detkit_core::{BoundingBox, Detection, GTInstance};
use rand::Rng;

pub fn random_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let w = rng.random_range(0.05..0.5);
    let h = rng.random_range(0.05..0.5);
    BoundingBox::new(rng.random_range(w / 2.0..1.0 - w / 2.0), rng.random_range(h / 2.0..1.0 - h / 2.0), w, h).unwrap()
}

pub fn jitter<R: Rng>(rng: &mut R, b: &BoundingBox, s: f64) -> BoundingBox {
    let mut j = || rng.random_range(-s..=s);
    BoundingBox::new(
        b.cx + j() * b.w,
        b.cy + j() * b.h,
        b.w * (1.0 + j()).max(0.05),
        b.h * (1.0 + j()).max(0.05),
    )
    .unwrap()
}

/// Confidence from a coarse grid half the time so ties are common.
pub fn confidence<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        rng.random_range(0..=20) as f64 / 20.0
    } else {
        rng.random::<f64>()
    }
}

/// At most 5 images, 6 predictions per image, `num_classes` classes.
pub fn micro_dataset<R: Rng>(rng: &mut R, num_classes: usize) -> Vec<ImageRecord> {
    let n_images = rng.random_range(1..=5);
    (0..n_images)
        .map(|i| {
            let gts: Vec<GTInstance> = (0..rng.random_range(0..=4))
                .map(|_| GTInstance::new(random_box(rng), rng.random_range(0..num_classes)).unwrap())
                .collect();
            let preds: Vec<Detection> = (0..rng.random_range(0..=6))
                .map(|_| {
                    let class_id = rng.random_range(0..num_classes);
                    let bbox = if !gts.is_empty() && rng.random_bool(0.7) {
                        let g = &gts[rng.random_range(0..gts.len())];
                        let s = [0.0, 0.05, 0.15, 0.3][rng.random_range(0..4)];
                        jitter(rng, &g.bbox, s)
                    } else {
                        random_box(rng)
                    };
                    let class_id = if rng.random_bool(0.7) && !gts.is_empty() {
                        gts[rng.random_range(0..gts.len())].class_id
                    } else {
                        class_id
                    };
                    Detection::new(bbox, class_id, confidence(rng)).unwrap()
                })
                .collect();
            ImageRecord {
                id: format!("img{i}"),
                preds,
                gts,
            }
        })
        .collect()
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

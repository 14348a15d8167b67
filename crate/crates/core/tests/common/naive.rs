//! Direct-from-definition references for convolution and NMS.

use detkit_core::tensor::ConvSpec;
use detkit_core::{Detection, Tensor};

use super::oracle::box_iou;

/// Six nested loops straight from the definition.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, s: &ConvSpec) -> Vec<f64> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = s.kernel_size as isize;
    let p = s.padding as isize;
    let oh = (h + 2 * s.padding - s.kernel_size) / s.stride + 1;
    let ow = (wd + 2 * s.padding - s.kernel_size) / s.stride + 1;
    let cin_g = c / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut out = vec![0.0; s.out_channels * oh * ow];
    for o in 0..s.out_channels {
        let g = o / cout_g;
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b.map_or(0.0, |b| b.data()[o]);
                for ci in 0..cin_g {
                    for u in 0..k {
                        for v in 0..k {
                            let y = (i * s.stride) as isize + u - p;
                            let z = (j * s.stride) as isize + v - p;
                            if y < 0 || z < 0 || y >= h as isize || z >= wd as isize {
                                continue;
                            }
                            let xin = x.data()[((g * cin_g + ci) * h + y as usize) * wd + z as usize];
                            let wv = w.data()[((o * cin_g + ci) * s.kernel_size + u as usize) * s.kernel_size + v as usize];
                            acc += xin * wv;
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

/// Quadratic reference: a box survives unless some earlier-ranked survivor
/// of the same class overlaps it above the threshold.
pub fn reference_nms(dets: &[Detection], thr: f64, agnostic: bool) -> Vec<Detection> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap().then(a.cmp(&b)));
    let mut alive = vec![true; idx.len()];
    for i in 0..idx.len() {
        if !alive[i] {
            continue;
        }
        for j in i + 1..idx.len() {
            let (a, b) = (&dets[idx[i]], &dets[idx[j]]);
            if (agnostic || a.class_id == b.class_id) && box_iou(&a.bbox, &b.bbox) > thr {
                alive[j] = false;
            }
        }
    }
    idx.iter().zip(alive).filter(|(_, a)| *a).map(|(&i, _)| dets[i]).collect()
}

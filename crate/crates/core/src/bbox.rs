//! Axis-aligned boxes in normalized center form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box given by center `(cx, cy)` and size `(w, h)`, normalized to the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Box from corners `(x1, y1, x2, y2)`; the corners may come in any order.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        let (x1, x2) = (x1.min(x2), x1.max(x2));
        let (y1, y2) = (y1.min(y2), y1.max(y2));
        Self {
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    /// `(x1, y1, x2, y2)` with `x1 <= x2` and `y1 <= y2`.
    pub fn to_corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.cx, self.cy, self.w, self.h];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bounding box", format!("non-finite coordinate in {self:?}")));
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(Error::invalid("bounding box", format!("negative size in {self:?}")));
        }
        Ok(())
    }

    /// Clips the box to the unit square. Boxes already inside are returned as is.
    pub fn clamp_unit(&self) -> Self {
        let (x1, y1, x2, y2) = self.to_corners();
        if x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 {
            return *self;
        }
        Self::from_corners(
            x1.clamp(0.0, 1.0),
            y1.clamp(0.0, 1.0),
            x2.clamp(0.0, 1.0),
            y2.clamp(0.0, 1.0),
        )
    }

    /// Total order on coordinates, used to break confidence ties without
    /// depending on input order.
    pub fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.to_corners();
    let (bx1, by1, bx2, by2) = b.to_corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    // areas from the same corner arithmetic, so identical boxes give exactly 1
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        let far = BoundingBox::new(3.0, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(iou(&a, &far), 0.0);
        let shifted = BoundingBox::new(1.0, 0.5, 1.0, 1.0).unwrap();
        assert!((iou(&a, &shifted) - 1.0 / 3.0).abs() < 1e-15);
        let empty = BoundingBox::new(0.5, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(iou(&empty, &empty), 0.0);
    }

    #[test]
    fn corners_round_trip() {
        let b = BoundingBox::from_corners(0.6, 0.2, 0.1, 0.4);
        let (x1, y1, x2, y2) = b.to_corners();
        assert!(x1 <= x2 && y1 <= y2);
        assert!((x1 - 0.1).abs() < 1e-15 && (x2 - 0.6).abs() < 1e-15);
        assert!(BoundingBox::new(0.5, 0.5, -0.1, 0.2).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..1.0f64, 0.0..1.0f64, 0.001..0.8f64, 0.001..0.8f64)
            .prop_map(|(cx, cy, w, h)| BoundingBox { cx, cy, w, h })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }
}

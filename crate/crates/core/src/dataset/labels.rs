use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::detection::{Detection, GTInstance};
use crate::error::{Error, Result};

/// Whether a label file holds ground truth or predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// `class cx cy w h`
    GroundTruth,
    /// `class cx cy w h conf`
    Prediction,
}

impl LabelKind {
    fn fields(self) -> usize {
        match self {
            LabelKind::GroundTruth => 5,
            LabelKind::Prediction => 6,
        }
    }
}

/// One line of a YOLO label file. Coordinates are normalized to the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: Option<f64>,
}

impl LabelRecord {
    pub fn validate(&self, num_classes: usize) -> std::result::Result<(), String> {
        if self.class_id >= num_classes {
            return Err(format!("class {} outside 0..{num_classes}", self.class_id));
        }
        for (name, v) in [("cx", self.cx), ("cy", self.cy), ("w", self.w), ("h", self.h)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} not in [0, 1]"));
            }
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(format!("box size {}x{} must be positive", self.w, self.h));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("confidence {c} not in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            h: self.h,
        }
    }

    /// Ground-truth instance, clipped to the image.
    pub fn to_gt(&self) -> Result<GTInstance> {
        GTInstance::new(self.bbox(), self.class_id)
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let conf = self
            .confidence
            .ok_or_else(|| Error::invalid("label record", "prediction record has no confidence"))?;
        Detection::new(self.bbox(), self.class_id, conf)
    }

    pub fn from_detection(d: &Detection) -> Self {
        Self {
            class_id: d.class_id,
            cx: d.bbox.cx,
            cy: d.bbox.cy,
            w: d.bbox.w,
            h: d.bbox.h,
            confidence: Some(d.confidence),
        }
    }

    /// Space-separated line without the trailing newline. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_line(&self) -> String {
        let mut s = format!("{} {} {} {} {}", self.class_id, self.cx, self.cy, self.w, self.h);
        if let Some(c) = self.confidence {
            write!(s, " {c}").expect("writing to a String");
        }
        s
    }
}

/// Parses a label file. Blank lines are skipped.
///
/// Syntax errors come back as [`Error::Parse`] with 1-based line and column;
/// well-formed lines with out-of-range values as [`Error::Invalid`] naming
/// the line.
pub fn parse_label_file(text: &str, source_name: &str, kind: LabelKind, num_classes: usize) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let perr = |column: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            column,
            message,
        };
        let tokens: Vec<(usize, &str)> = tokens(line);
        if tokens.is_empty() {
            continue;
        }
        let want = kind.fields();
        if tokens.len() != want {
            let column = tokens.get(want).map_or(line.len() + 1, |t| t.0);
            return Err(perr(column, format!("expected {want} fields, found {}", tokens.len())));
        }
        let (c0, t0) = tokens[0];
        let class_id: usize = t0
            .parse()
            .map_err(|_| perr(c0, format!("class id {t0:?} is not a non-negative integer")))?;
        let mut vals = [0.0; 5];
        for (slot, &(col, tok)) in vals.iter_mut().zip(&tokens[1..]) {
            let v: f64 = tok.parse().map_err(|_| perr(col, format!("{tok:?} is not a number")))?;
            if !v.is_finite() {
                return Err(perr(col, format!("{tok:?} is not finite")));
            }
            *slot = v;
        }
        let rec = LabelRecord {
            class_id,
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
            confidence: (kind == LabelKind::Prediction).then_some(vals[4]),
        };
        rec.validate(num_classes)
            .map_err(|reason| Error::invalid(format!("{source_name}:{line_no}"), reason))?;
        out.push(rec);
    }
    Ok(out)
}

/// One line per record, each newline-terminated.
pub fn serialize_labels(records: &[LabelRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

/// Whitespace-separated tokens with their 1-based columns.
pub(crate) fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

use std::fmt::Write as _;

use crate::assignment::PredCandidate;
use crate::bbox::BoundingBox;
use crate::detection::GTInstance;
use crate::error::{Error, Result};

use super::labels::tokens;

/// Ground truth plus scored candidate predictions for one assignment problem.
///
/// Text form, `#` comments and blank lines ignored:
///
/// ```text
/// gt   <class> <cx> <cy> <w> <h>
/// pred <cx> <cy> <w> <h> <score_0> ... <score_{C-1}>
/// ```
///
/// Every `pred` line has the same number of scores, which fixes the class
/// count. Indices in assignment results follow line order per kind.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentInstance {
    pub num_classes: usize,
    pub gts: Vec<GTInstance>,
    pub preds: Vec<PredCandidate>,
}

pub fn parse_instance_file(text: &str, source_name: &str) -> Result<AssignmentInstance> {
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    let mut num_classes: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        let toks = tokens(line);
        let Some(&(_, kind)) = toks.first() else { continue };
        let perr = |column: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            column,
            message,
        };
        let num = |k: usize| -> Result<f64> {
            let (col, t) = toks[k];
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(col, format!("{t:?} is not a number")))
        };
        let bbox = |first: usize| -> Result<BoundingBox> {
            BoundingBox::new(num(first)?, num(first + 1)?, num(first + 2)?, num(first + 3)?)
                .map_err(|e| Error::invalid(format!("{source_name}:{line_no}"), e.to_string()))
        };
        match kind {
            "gt" => {
                if toks.len() != 6 {
                    return Err(perr(1, format!("gt line needs 5 values, found {}", toks.len() - 1)));
                }
                let (col, t) = toks[1];
                let class_id: usize = t.parse().map_err(|_| perr(col, format!("class id {t:?} is not an integer")))?;
                let g = GTInstance::new(bbox(2)?, class_id)
                    .map_err(|e| Error::invalid(format!("{source_name}:{line_no}"), e.to_string()))?;
                gts.push((line_no, col, g));
            }
            "pred" => {
                if toks.len() < 6 {
                    return Err(perr(1, "pred line needs 4 box values and at least one score".into()));
                }
                let c = toks.len() - 5;
                if *num_classes.get_or_insert(c) != c {
                    return Err(perr(toks[5].0, format!("expected {} scores, found {c}", num_classes.unwrap_or(c))));
                }
                let class_scores = (5..toks.len()).map(num).collect::<Result<Vec<_>>>()?;
                preds.push(PredCandidate {
                    bbox: bbox(1)?,
                    class_scores,
                    source: preds.len(),
                });
            }
            other => return Err(perr(1, format!("unknown record kind {other:?}; expected gt or pred"))),
        }
    }
    let num_classes = num_classes.unwrap_or(0);
    let mut out = Vec::with_capacity(gts.len());
    for (line, column, g) in gts {
        if num_classes > 0 && g.class_id >= num_classes {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line,
                column,
                message: format!("class {} outside the {num_classes} scored classes", g.class_id),
            });
        }
        out.push(g);
    }
    Ok(AssignmentInstance { num_classes, gts: out, preds })
}

pub fn serialize_instance_file(inst: &AssignmentInstance) -> String {
    let mut s = String::new();
    for g in &inst.gts {
        let b = g.bbox;
        writeln!(s, "gt {} {} {} {} {}", g.class_id, b.cx, b.cy, b.w, b.h).expect("writing to a String");
    }
    for p in &inst.preds {
        let b = p.bbox;
        write!(s, "pred {} {} {} {}", b.cx, b.cy, b.w, b.h).expect("writing to a String");
        for v in &p.class_scores {
            write!(s, " {v}").expect("writing to a String");
        }
        s.push('\n');
    }
    s
}

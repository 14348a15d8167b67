use serde::{Deserialize, Serialize};

use super::evaluate::{EvalReport, Sweep};
use crate::error::{Error, Result};

/// Class label used for the pooled curve.
pub const ALL_CLASSES: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFormat {
    Csv,
    Json,
}

impl std::str::FromStr for CurveFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CurveFormat::Csv),
            "json" => Ok(CurveFormat::Json),
            _ => Err(Error::invalid("curve format", format!("{s:?} is not csv or json"))),
        }
    }
}

/// One row of the confidence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub class: String,
}

/// One point of a precision/recall curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrRow {
    pub recall: f64,
    pub precision: f64,
    pub confidence: f64,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Curves {
    pub sweep: Vec<CurveRow>,
    pub pr: Vec<PrRow>,
}

impl Curves {
    /// Pooled sweep first, then each class in id order. Classes without
    /// ground truth still get rows, with recall 0.
    pub fn from_report(report: &EvalReport) -> Self {
        let mut out = Curves::default();
        let mut push = |name: &str, s: &Sweep| {
            for (i, &c) in report.confidence_grid.iter().enumerate() {
                out.sweep.push(CurveRow {
                    confidence: c,
                    precision: s.precision[i],
                    recall: s.recall[i],
                    f1: s.f1[i],
                    class: name.to_string(),
                });
            }
        };
        push(ALL_CLASSES, &report.overall);
        for c in &report.classes {
            push(&c.name, &c.sweep);
        }
        for c in &report.classes {
            out.pr.extend(c.pr_curve.iter().map(|p| PrRow {
                recall: p.recall,
                precision: p.precision,
                confidence: p.confidence,
                class: c.name.clone(),
            }));
        }
        out
    }

    /// `(sweep_csv, pr_csv)`.
    pub fn to_csv(&self) -> Result<(String, String)> {
        Ok((write_csv(&self.sweep)?, write_csv(&self.pr)?))
    }

    pub fn from_csv(sweep_csv: &str, pr_csv: &str) -> Result<Self> {
        Ok(Curves {
            sweep: read_csv(sweep_csv, "sweep CSV")?,
            pr: read_csv(pr_csv, "PR CSV")?,
        })
    }
}

fn write_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid("CSV export", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("CSV export", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str, name: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let (line, column) = e.position().map_or((0, 0), |p| (p.line() as usize, 1));
                Error::Parse {
                    source_name: name.into(),
                    line,
                    column,
                    message: e.to_string(),
                }
            })
        })
        .collect()
}

/// Renders curves for writing: `[(file_name, contents)]`.
///
/// CSV yields `curves.csv` (`confidence,precision,recall,f1,class`) and
/// `pr.csv` (`recall,precision,confidence,class`); JSON yields a single
/// `curves.json`.
pub fn curve_export(report: &EvalReport, format: CurveFormat) -> Result<Vec<(&'static str, String)>> {
    let curves = Curves::from_report(report);
    match format {
        CurveFormat::Csv => {
            let (sweep, pr) = curves.to_csv()?;
            Ok(vec![("curves.csv", sweep), ("pr.csv", pr)])
        }
        CurveFormat::Json => {
            let json = serde_json::to_string_pretty(&curves).map_err(|e| Error::invalid("JSON export", e.to_string()))?;
            Ok(vec![("curves.json", json + "\n")])
        }
    }
}

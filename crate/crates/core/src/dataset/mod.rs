//! Dataset tooling: YOLO label and prediction files, class tables, seeded
//! splits, class statistics, training hyperparameters, and the assignment
//! instance format.

mod hyper;
mod instances;
mod labels;
mod split;
mod stats;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use hyper::{parse_hyperparams, parse_hyperparams_with_warnings, HyperParams};
pub use instances::{parse_instance_file, serialize_instance_file, AssignmentInstance};
pub use labels::{parse_label_file, serialize_labels, LabelKind, LabelRecord};
pub use split::{patient_key, split_dataset, split_sizes, Split, SplitMode, SplitSpec};
pub use stats::{class_distribution, ClassDistribution, ClassStat};

pub const DEFAULT_CLASS_NAMES: [&str; 9] = [
    "boneanomaly",
    "bonelesion",
    "foreignbody",
    "fracture",
    "metal",
    "periostealreaction",
    "pronatorsign",
    "softtissue",
    "text",
];

pub fn default_class_names() -> Vec<String> {
    DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Classes file: one name per line, line `i` (0-based) is class `i`.
/// A final trailing newline is allowed; blank lines and duplicates are not.
pub fn parse_classes(text: &str, source_name: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.trim();
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            column: 1,
            message,
        };
        if name.is_empty() {
            return Err(err("blank class name".into()));
        }
        if !seen.insert(name.to_string()) {
            return Err(err(format!("duplicate class name {name:?}")));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(Error::invalid(source_name, "classes file lists no classes"));
    }
    Ok(names)
}

/// Labels of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLabels {
    pub id: String,
    pub records: Vec<LabelRecord>,
}

/// Label files of a directory, one `<id>.txt` per image, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub class_names: Vec<String>,
    pub images: Vec<ImageLabels>,
}

impl DatasetIndex {
    pub fn new(class_names: Vec<String>, mut images: Vec<ImageLabels>) -> Result<Self> {
        images.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = images.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::invalid("dataset index", format!("duplicate image id {:?}", w[0].id)));
        }
        for img in &images {
            for (i, r) in img.records.iter().enumerate() {
                r.validate(class_names.len())
                    .map_err(|reason| Error::invalid(format!("image {:?} record {}", img.id, i + 1), reason))?;
            }
        }
        Ok(Self { class_names, images })
    }

    /// Reads every `*.txt` file directly inside `dir`. Files are parsed in
    /// parallel; the index is sorted by id.
    pub fn load_dir(dir: &Path, class_names: Vec<String>, kind: LabelKind) -> Result<Self> {
        let files = label_files(dir)?;
        let n = class_names.len();
        let images = files
            .par_iter()
            .map(|path| {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::invalid(path.display().to_string(), "file name is not UTF-8"))?
                    .to_string();
                let records = parse_label_file(&text, &path.display().to_string(), kind, n)?;
                Ok(ImageLabels { id, records })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(class_names, images)
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ImageLabels> {
        self.images
            .binary_search_by(|i| i.id.as_str().cmp(id))
            .ok()
            .map(|k| &self.images[k])
    }
}

/// Sorted `*.txt` files directly inside `dir`.
pub fn label_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Image ids (file stems) of a label directory, sorted.
pub fn label_ids(dir: &Path) -> Result<Vec<String>> {
    label_files(dir)?
        .iter()
        .map(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .map(String::from)
                .ok_or_else(|| Error::invalid(p.display().to_string(), "file name is not UTF-8"))
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use super::DatasetIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub class_id: usize,
    pub name: String,
    /// Images with at least one instance of the class.
    pub images_containing: usize,
    pub instances: usize,
    /// `images_containing / total_images * 100`, 0 for an empty dataset.
    pub ratio_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub total_images: usize,
    pub total_instances: usize,
    pub classes: Vec<ClassStat>,
}

pub fn class_distribution(index: &DatasetIndex) -> ClassDistribution {
    let n = index.class_names.len();
    let mut images_containing = vec![0usize; n];
    let mut instances = vec![0usize; n];
    for img in &index.images {
        let mut present = vec![false; n];
        for r in &img.records {
            instances[r.class_id] += 1;
            present[r.class_id] = true;
        }
        for (c, p) in present.into_iter().enumerate() {
            images_containing[c] += p as usize;
        }
    }
    let total = index.images.len();
    ClassDistribution {
        total_images: total,
        total_instances: instances.iter().sum(),
        classes: index
            .class_names
            .iter()
            .enumerate()
            .map(|(c, name)| ClassStat {
                class_id: c,
                name: name.clone(),
                images_containing: images_containing[c],
                instances: instances[c],
                ratio_percent: if total == 0 {
                    0.0
                } else {
                    images_containing[c] as f64 / total as f64 * 100.0
                },
            })
            .collect(),
    }
}

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each image is assigned independently. Images of one patient can land
    /// in different partitions.
    #[default]
    Image,
    /// All images sharing a [`patient_key`] go to the same partition. Sizes
    /// then only approximate the ratios.
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// train / val / test
    pub ratios: [f64; 3],
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.75, 0.20, 0.05],
            seed: 0,
            mode: SplitMode::Image,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("split ratios", format!("{:?} must all be positive", self.ratios)));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split ratios", format!("{:?} sum to {sum}, not 1", self.ratios)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Partition sizes for `n` items by largest remainder: each part gets
/// `floor(ratio * n)`, and the leftover items go one each to the parts with
/// the largest fractional remainders, earlier parts first on ties.
pub fn split_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut leftover = n - sizes.iter().sum::<usize>().min(n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    sizes
}

/// Grouping key for patient-level splits: the id up to its first `_`.
pub fn patient_key(id: &str) -> &str {
    id.split('_').next().unwrap_or(id)
}

/// Seeded random partition of `ids` into train/val/test.
///
/// Ids are sorted before shuffling, so the result depends only on the id set
/// and the seed. Each output list is sorted.
pub fn split_dataset(ids: &[String], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid("split input", format!("duplicate id {id:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = split_sizes(ids.len(), &spec.ratios);
    let mut parts: [Vec<String>; 3] = Default::default();
    match spec.mode {
        SplitMode::Image => {
            let mut sorted: Vec<&String> = ids.iter().collect();
            sorted.sort();
            sorted.shuffle(&mut rng);
            let mut it = sorted.into_iter().cloned();
            for (part, &n) in parts.iter_mut().zip(&sizes) {
                part.extend(it.by_ref().take(n));
            }
        }
        SplitMode::Patient => {
            let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
            for id in ids {
                groups.entry(patient_key(id)).or_default().push(id.clone());
            }
            let mut groups: Vec<Vec<String>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            // fill train, then val, with whole patients; the rest is test
            let mut p = 0;
            for g in groups {
                while p < 2 && parts[p].len() >= sizes[p] {
                    p += 1;
                }
                parts[p].extend(g);
            }
        }
    }
    for part in &mut parts {
        part.sort();
    }
    let [train, val, test] = parts;
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i:05}")).collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(20, &[0.75, 0.2, 0.05]), [15, 4, 1]);
        assert_eq!(split_sizes(20327, &[0.75, 0.2, 0.05]), [15245, 4066, 1016]);
        assert_eq!(split_sizes(0, &[0.75, 0.2, 0.05]), [0, 0, 0]);
        assert_eq!(split_sizes(1, &[0.75, 0.2, 0.05]), [1, 0, 0]);
        assert_eq!(split_sizes(3, &[1.0 / 3.0; 3]), [1, 1, 1]);
    }

    #[test]
    fn rejects_duplicates_and_bad_ratios() {
        let mut v = ids(5);
        v.push("img00001".into());
        assert!(split_dataset(&v, &SplitSpec::default()).is_err());
        let spec = SplitSpec {
            ratios: [0.5, 0.5, 0.1],
            ..Default::default()
        };
        assert!(split_dataset(&ids(5), &spec).is_err());
        let spec = SplitSpec {
            ratios: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        assert!(split_dataset(&ids(5), &spec).is_err());
    }

    #[test]
    fn seeds_matter() {
        let v = ids(200);
        let base = split_dataset(&v, &SplitSpec::default()).unwrap();
        for seed in 1..=50 {
            let s = split_dataset(&v, &SplitSpec { seed, ..Default::default() }).unwrap();
            assert_ne!(s, base, "seed {seed}");
        }
    }

    #[test]
    fn patient_mode_keeps_patients_together() {
        let v: Vec<String> = (0..60).map(|i| format!("p{:02}_{}", i / 3, i % 3)).collect();
        let spec = SplitSpec {
            mode: SplitMode::Patient,
            seed: 7,
            ..Default::default()
        };
        let s = split_dataset(&v, &spec).unwrap();
        let owner = |id: &str| {
            [&s.train, &s.val, &s.test]
                .iter()
                .position(|p| p.iter().any(|x| patient_key(x) == patient_key(id)))
        };
        for part in [&s.train, &s.val, &s.test] {
            for id in part {
                let k = patient_key(id);
                let homes: Vec<usize> = [&s.train, &s.val, &s.test]
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.iter().any(|x| patient_key(x) == k))
                    .map(|(i, _)| i)
                    .collect();
                assert_eq!(homes.len(), 1, "{id}");
                assert_eq!(owner(id), Some(homes[0]));
            }
        }
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 60);
        assert_eq!(s.train.len(), 45);
        assert!(!s.test.is_empty());
    }

    proptest! {
        #[test]
        fn partition_is_exact(n in 0usize..300, seed in any::<u64>()) {
            let v = ids(n);
            let spec = SplitSpec { seed, ..Default::default() };
            let s = split_dataset(&v, &spec).unwrap();
            let sizes = split_sizes(n, &spec.ratios);
            prop_assert_eq!([s.train.len(), s.val.len(), s.test.len()], sizes);
            let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            all.sort();
            prop_assert_eq!(all, v.clone());
            prop_assert_eq!(split_dataset(&v, &spec).unwrap(), s);
        }
    }
}

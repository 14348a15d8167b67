//! Redundancy analysis of convolution filters by intrinsic rank.
//!
//! A filter `[C_out, C_in, k, k]` is flattened to a `C_out x (C_in*k*k)`
//! matrix, one row per output channel. Its intrinsic rank is the number of
//! singular values above `lambda_frac * sigma_max`. Low rank relative to
//! `min(C_out, C_in*k*k)` marks a redundant layer.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::WeightStore;
use crate::error::{Error, Result};
use crate::tensor::{singular_values, Matrix, Tensor};

pub const DEFAULT_LAMBDA_FRAC: f64 = 0.05;
pub const RANK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub name: String,
    /// `[C_out, C_in, k, k]`
    pub filter: Tensor,
}

impl LayerWeights {
    pub fn new(name: impl Into<String>, filter: Tensor) -> Result<Self> {
        filter.dims4()?;
        Ok(Self {
            name: name.into(),
            filter,
        })
    }

    pub fn matrix(&self) -> Matrix {
        let rows = self.filter.shape()[0];
        let cols = self.filter.len() / rows;
        Matrix::new(rows, cols, self.filter.data().to_vec()).expect("filter length is rows * cols")
    }

    pub fn max_rank(&self) -> usize {
        let rows = self.filter.shape()[0];
        rows.min(self.filter.len() / rows)
    }
}

/// Every 4-D tensor of a weight store, in store order.
pub fn conv_layers(store: &WeightStore) -> Vec<LayerWeights> {
    store
        .iter()
        .filter(|(_, t)| t.shape().len() == 4)
        .map(|(n, t)| LayerWeights {
            name: n.to_string(),
            filter: t.clone(),
        })
        .collect()
}

fn check_lambda(lambda_frac: f64) -> Result<()> {
    if lambda_frac > 0.0 && lambda_frac < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("lambda_frac", format!("{lambda_frac} not in (0, 1)")))
    }
}

fn count_above(sv: &[f64], lambda_frac: f64) -> usize {
    let cut = lambda_frac * sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > cut).count()
}

pub fn intrinsic_rank(w: &LayerWeights, lambda_frac: f64) -> Result<usize> {
    check_lambda(lambda_frac)?;
    Ok(count_above(&singular_values(&w.matrix()), lambda_frac))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRank {
    pub name: String,
    /// Position in the input list.
    pub index: usize,
    pub shape: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub intrinsic_rank: usize,
    pub max_rank: usize,
    pub normalized_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub schema_version: u32,
    pub lambda_frac: f64,
    /// Most redundant first; ties keep input order.
    pub layers: Vec<LayerRank>,
}

impl RankReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("# lambda_frac={}\n", self.lambda_frac);
        s.push_str("name\tshape\tintrinsic_rank\tmax_rank\tnormalized_rank\n");
        for l in &self.layers {
            let shape: Vec<String> = l.shape.iter().map(|d| d.to_string()).collect();
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:.6}",
                l.name,
                shape.join("x"),
                l.intrinsic_rank,
                l.max_rank,
                l.normalized_rank
            )
            .expect("writing to a String");
        }
        s
    }
}

/// Ranks each layer (in parallel) and sorts ascending by normalized rank.
pub fn redundancy_ranking(layers: &[LayerWeights], lambda_frac: f64) -> Result<RankReport> {
    check_lambda(lambda_frac)?;
    if layers.is_empty() {
        return Err(Error::invalid("rank analysis", "no convolution layers given"));
    }
    let mut ranked: Vec<LayerRank> = layers
        .par_iter()
        .enumerate()
        .map(|(index, l)| {
            let sv = singular_values(&l.matrix());
            let r = count_above(&sv, lambda_frac);
            let max_rank = l.max_rank();
            LayerRank {
                name: l.name.clone(),
                index,
                shape: l.filter.shape().to_vec(),
                singular_values: sv,
                intrinsic_rank: r,
                max_rank,
                normalized_rank: r as f64 / max_rank as f64,
            }
        })
        .collect();
    ranked.sort_by(|a, b| a.normalized_rank.total_cmp(&b.normalized_rank));
    Ok(RankReport {
        schema_version: RANK_SCHEMA_VERSION,
        lambda_frac,
        layers: ranked,
    })
}

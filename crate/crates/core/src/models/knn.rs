use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    25
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: default_k() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train: Matrix,
    pub labels: Vec<u8>,
}

pub fn fit_knn(d: &Dataset, p: &KnnParams) -> Result<KnnModel> {
    if p.k == 0 || p.k > d.n_rows() {
        return Err(Error::Config(format!("knn k = {} must lie in 1..={}", p.k, d.n_rows())));
    }
    if d.values().has_non_finite() {
        return Err(Error::Training("feature matrix contains missing or non-finite values".into()));
    }
    Ok(KnnModel { k: p.k, train: d.values().clone(), labels: d.target().to_vec() })
}

impl KnnModel {
    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances resolve to the lower training index.
    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let mut cand: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(i, t)| (t.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cand.len() > self.k {
            cand.select_nth_unstable_by(self.k - 1, key);
            cand.truncate(self.k);
        }
        cand.sort_unstable_by(key);
        cand.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let nb = self.neighbors(row);
        nb.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nb.len() as f64
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Vec<f64> {
        (0..rows.n_rows()).into_par_iter().map(|i| self.predict_row(rows.row(i))).collect()
    }
}

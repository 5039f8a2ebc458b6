use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_scaler(d: &Dataset) -> Result<ScalerParams> {
    if d.has_missing() {
        return Err(Error::Preprocess("scaler needs imputed data with no missing values".into()));
    }
    let n = d.n_rows() as f64;
    let mut mean = vec![0.0; d.n_cols()];
    let mut std = vec![0.0; d.n_cols()];
    if d.n_rows() == 0 {
        return Ok(ScalerParams { mean, std });
    }
    for row in d.values().rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for row in d.values().rows() {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok(ScalerParams { mean, std })
}

/// `z = (x - mean) / std`; columns with zero spread map to 0.
pub fn apply_scaler(d: &Dataset, p: &ScalerParams) -> Result<Dataset> {
    if p.mean.len() != d.n_cols() || p.std.len() != d.n_cols() {
        return Err(Error::Schema(format!(
            "scaler fitted on {} columns, dataset has {}",
            p.mean.len(),
            d.n_cols()
        )));
    }
    let mut values = d.values().clone();
    for i in 0..values.n_rows() {
        for j in 0..values.n_cols() {
            let z = if p.std[j] > 0.0 { (values.get(i, j) - p.mean[j]) / p.std[j] } else { 0.0 };
            values.set(i, j, z);
        }
    }
    d.with_values(values)
}

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const VAR_FLOOR_FACTOR: f64 = 1e-9;

/// Gaussian naive Bayes with per-class, per-feature means and variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub log_prior: [f64; 2],
    pub means: [Vec<f64>; 2],
    /// Variances with the floor already added.
    pub variances: [Vec<f64>; 2],
}

pub fn fit_gnb(d: &Dataset) -> Result<GnbModel> {
    d.require_both_classes()?;
    if d.values().has_non_finite() {
        return Err(Error::Training("feature matrix contains missing or non-finite values".into()));
    }
    let p = d.n_cols();
    let (neg, pos) = d.class_counts();
    let n = d.n_rows() as f64;
    let counts = [neg as f64, pos as f64];
    let mut means = [vec![0.0; p], vec![0.0; p]];
    for (row, &t) in d.values().rows().zip(d.target()) {
        for (m, v) in means[t as usize].iter_mut().zip(row) {
            *m += v;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c]);
    }
    let mut variances = [vec![0.0; p], vec![0.0; p]];
    for (row, &t) in d.values().rows().zip(d.target()) {
        let c = t as usize;
        for j in 0..p {
            let dv = row[j] - means[c][j];
            variances[c][j] += dv * dv;
        }
    }
    for c in 0..2 {
        variances[c].iter_mut().for_each(|v| *v /= counts[c]);
    }
    let max_var = (0..p)
        .map(|j| {
            let col = d.values().column(j);
            let m = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    let floor = if max_var > 0.0 { VAR_FLOOR_FACTOR * max_var } else { VAR_FLOOR_FACTOR };
    for c in 0..2 {
        variances[c].iter_mut().for_each(|v| *v += floor);
    }
    Ok(GnbModel { log_prior: [(counts[0] / n).ln(), (counts[1] / n).ln()], means, variances })
}

impl GnbModel {
    pub fn log_joint(&self, row: &[f64]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (c, o) in out.iter_mut().enumerate() {
            for (j, x) in row.iter().enumerate() {
                let v = self.variances[c][j];
                let dv = x - self.means[c][j];
                *o += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - dv * dv / (2.0 * v);
            }
        }
        out
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let [a, b] = self.log_joint(row);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        eb / (ea + eb)
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows().map(|r| self.predict_row(r)).collect()
    }
}

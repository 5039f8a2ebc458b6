use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// Minority/majority count ratio to reach.
    #[serde(default = "default_ratio")]
    pub target_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}

fn default_ratio() -> f64 {
    1.0
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { k_neighbors: default_k(), target_ratio: default_ratio(), seed: 0 }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::Config("SMOTE k_neighbors must be at least 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "SMOTE target_ratio {} must lie in (0, 1]",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SmoteOutcome {
    /// Original rows, unchanged and in order, followed by the synthetic rows.
    pub dataset: Dataset,
    pub minority_class: u8,
    pub synthetic_count: usize,
    pub k_used: usize,
    pub warnings: Vec<String>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest minority neighbours of every minority row (positions into
/// `minority`), nearest first; equal distances resolve to the lower position.
fn minority_neighbors(d: &Dataset, minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority
        .par_iter()
        .enumerate()
        .map(|(a, &ra)| {
            let pa = d.values().row(ra);
            let mut cand: Vec<(f64, usize)> = minority
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &rb)| (squared_distance(pa, d.values().row(rb)), b))
                .collect();
            let by_key = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
            if cand.len() > k {
                cand.select_nth_unstable_by(k - 1, by_key);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_key);
            cand.into_iter().map(|(_, b)| b).collect()
        })
        .collect()
}

/// Append synthetic minority rows `p + lambda * (q - p)` until the
/// minority/majority ratio reaches `cfg.target_ratio` (rounded to the nearest
/// row). `q` is one of the `k` nearest minority neighbours of `p` and
/// `lambda` is uniform on `[0, 1)`. Base rows are taken round-robin.
pub fn smote(d: &Dataset, cfg: &SmoteConfig) -> Result<SmoteOutcome> {
    cfg.validate()?;
    if !d.is_fully_numeric() {
        return Err(Error::Resample("SMOTE needs an encoded, fully numeric dataset".into()));
    }
    if d.has_missing() {
        return Err(Error::Resample("SMOTE needs imputed data with no missing values".into()));
    }
    let (neg, pos) = d.class_counts();
    let minority_class = u8::from(pos < neg);
    let (n_min, n_maj) = if pos < neg { (pos, neg) } else { (neg, pos) };
    if n_min < 2 {
        return Err(Error::Resample(format!("minority class has {n_min} rows; SMOTE needs at least 2")));
    }
    let mut warnings = Vec::new();
    let mut k = cfg.k_neighbors;
    if k >= n_min {
        warnings.push(format!(
            "k_neighbors {} >= minority size {n_min}; clamped to {}",
            cfg.k_neighbors,
            n_min - 1
        ));
        k = n_min - 1;
    }
    let desired = (cfg.target_ratio * n_maj as f64).round() as usize;
    let deficit = desired.saturating_sub(n_min);
    if deficit == 0 {
        return Ok(SmoteOutcome { dataset: d.clone(), minority_class, synthetic_count: 0, k_used: k, warnings });
    }

    let minority: Vec<usize> = (0..d.n_rows()).filter(|&i| d.target()[i] == minority_class).collect();
    let neighbors = minority_neighbors(d, &minority, k);

    let synthetic: Vec<Vec<f64>> = (0..deficit)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(cfg.seed, "smote", s as u64);
            let base = s % minority.len();
            let nb = neighbors[base][r.gen_range(0..k)];
            let lambda: f64 = r.gen();
            let p = d.values().row(minority[base]);
            let q = d.values().row(minority[nb]);
            p.iter().zip(q).map(|(a, b)| a + lambda * (b - a)).collect()
        })
        .collect();

    let mut values = d.values().clone();
    let mut target = d.target().to_vec();
    let mut row_ids = d.row_ids().to_vec();
    let first_id = d.row_ids().iter().copied().min().unwrap_or(0).min(0) - 1;
    for (s, row) in synthetic.iter().enumerate() {
        values.push_row(row)?;
        target.push(minority_class);
        row_ids.push(first_id - s as i64);
    }
    Ok(SmoteOutcome {
        dataset: d.with_rows(values, target, row_ids)?,
        minority_class,
        synthetic_count: deficit,
        k_used: k,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_minority_midpoint_lies_on_segment() {
        let d = Dataset::from_rows(
            &[vec![0.0, 0.0], vec![2.0, 2.0], vec![5.0, 5.0], vec![6.0, 5.0], vec![7.0, 5.0]],
            &[1, 1, 0, 0, 0],
        )
        .unwrap();
        let out = smote(&d, &SmoteConfig { k_neighbors: 1, target_ratio: 1.0, seed: 3 }).unwrap();
        assert_eq!(out.synthetic_count, 1);
        let s = out.dataset.values().row(5);
        // p = (0,0), q = (2,2): s = (2l, 2l)
        assert_eq!(s[0], s[1]);
        assert!((0.0..2.0).contains(&s[0]));
        assert_eq!(out.dataset.target()[5], 1);
        assert!(out.dataset.row_ids()[5] < 0);
    }

    #[test]
    fn deficit_for_ten_ninety() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let target: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let out = smote(&d, &SmoteConfig { seed: 1, ..SmoteConfig::default() }).unwrap();
        assert_eq!(out.synthetic_count, 80);
        assert_eq!(out.dataset.class_counts(), (90, 90));
        assert_eq!(out.dataset.values().select_rows(&(0..100).collect::<Vec<_>>()), *d.values());
    }

    #[test]
    fn singleton_minority_is_error_and_k_clamps() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], &[1, 0, 0]).unwrap();
        assert!(matches!(smote(&d, &SmoteConfig::default()), Err(Error::Resample(_))));
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]], &[1, 1, 0, 0, 0]).unwrap();
        let out = smote(&d, &SmoteConfig::default()).unwrap();
        assert_eq!(out.k_used, 1);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn rejects_bad_config() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[1, 0]).unwrap();
        let cfg = SmoteConfig { target_ratio: 1.5, ..SmoteConfig::default() };
        assert!(matches!(smote(&d, &cfg), Err(Error::Config(_))));
        let cfg = SmoteConfig { k_neighbors: 0, ..SmoteConfig::default() };
        assert!(matches!(smote(&d, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_rows_stay_in_minority_bounding_box() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64).sin() * 10.0, (i * i % 17) as f64]).collect();
        let target: Vec<u8> = (0..60).map(|i| u8::from(i % 5 == 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let out = smote(&d, &SmoteConfig { k_neighbors: 3, target_ratio: 0.8, seed: 11 }).unwrap();
        let (lo, hi) = (0..2)
            .map(|j| {
                let col: Vec<f64> = (0..60).filter(|&i| target[i] == 1).map(|i| rows[i][j]).collect();
                (col.iter().cloned().fold(f64::INFINITY, f64::min), col.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            })
            .unzip::<f64, f64, Vec<f64>, Vec<f64>>();
        for i in 60..out.dataset.n_rows() {
            for j in 0..2 {
                let v = out.dataset.values().get(i, j);
                assert!(v >= lo[j] - 1e-12 && v <= hi[j] + 1e-12);
            }
        }
        let (neg, pos) = out.dataset.class_counts();
        assert_eq!(pos, (0.8f64 * neg as f64).round() as usize);
    }
}

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

const INFO_GAIN_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SelectionMethod {
    /// Drop one column of every pair whose |Pearson r| exceeds `threshold`.
    CorrelationFilter {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Keep the `top_m` columns by mutual information with the target.
    InformationGain { top_m: usize },
}

impl SelectionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionMethod::CorrelationFilter { .. } => "correlation-filter",
            SelectionMethod::InformationGain { .. } => "information-gain",
        }
    }
}

fn default_threshold() -> f64 {
    0.95
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Columns with at most 10 distinct values use one bin per value; otherwise
/// rows are cut into 10 equal-frequency bins by rank, tied values sharing the
/// bin of their first rank.
fn bin_codes(column: &[f64]) -> Vec<usize> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let mut distinct = 0;
    for w in order.windows(2) {
        if column[w[0]] != column[w[1]] {
            distinct += 1;
        }
    }
    let distinct = if n == 0 { 0 } else { distinct + 1 };
    let mut codes = vec![0; n];
    let mut current = 0;
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && column[i] != column[order[rank - 1]] {
            current += 1;
            first_rank = rank;
        }
        codes[i] = if distinct <= INFO_GAIN_BINS { current } else { first_rank * INFO_GAIN_BINS / n };
    }
    codes
}

fn entropy_bits(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information (bits) between the binned column and the target.
pub fn information_gain(column: &[f64], target: &[u8]) -> f64 {
    let n = column.len();
    if n == 0 {
        return 0.0;
    }
    let codes = bin_codes(column);
    let n_bins = codes.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![[0.0f64; 2]; n_bins];
    for (c, &t) in codes.iter().zip(target) {
        joint[*c][t as usize] += 1.0;
    }
    let total = n as f64;
    let class = [
        joint.iter().map(|j| j[0]).sum::<f64>(),
        joint.iter().map(|j| j[1]).sum::<f64>(),
    ];
    let h_y = entropy_bits(&class, total);
    let h_y_given_x: f64 = joint
        .iter()
        .map(|j| {
            let nb = j[0] + j[1];
            if nb == 0.0 {
                0.0
            } else {
                nb / total * entropy_bits(j, nb)
            }
        })
        .sum();
    (h_y - h_y_given_x).max(0.0)
}

pub fn information_gain_scores(d: &Dataset) -> Vec<f64> {
    (0..d.n_cols()).map(|j| information_gain(&d.values().column(j), d.target())).collect()
}

/// Visit columns by descending |r| with the target (ties: lower index) and
/// keep each one whose |r| with every kept column is at most `threshold`.
/// Returned names keep the dataset's column order.
pub fn correlation_filter(d: &Dataset, threshold: f64) -> Result<Vec<String>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("correlation threshold {threshold} must lie in (0, 1]")));
    }
    let target: Vec<f64> = d.target().iter().map(|&t| t as f64).collect();
    let cols: Vec<Vec<f64>> = (0..d.n_cols()).map(|j| d.values().column(j)).collect();
    let relevance: Vec<f64> = cols.iter().map(|c| pearson(c, &target).abs()).collect();
    let mut order: Vec<usize> = (0..d.n_cols()).collect();
    order.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for j in order {
        if kept.iter().all(|&k| pearson(&cols[j], &cols[k]).abs() <= threshold) {
            kept.push(j);
        }
    }
    kept.sort_unstable();
    Ok(kept.into_iter().map(|j| d.feature_names()[j].clone()).collect())
}

/// Names of the retained columns. Information gain returns them ranked by
/// score (ties: lower index); the correlation filter returns column order.
pub fn select_features(d: &Dataset, method: &SelectionMethod) -> Result<Vec<String>> {
    if d.has_missing() || !d.is_fully_numeric() {
        return Err(Error::Preprocess("feature selection needs an encoded, imputed dataset".into()));
    }
    match method {
        SelectionMethod::CorrelationFilter { threshold } => correlation_filter(d, *threshold),
        SelectionMethod::InformationGain { top_m } => {
            if *top_m == 0 {
                return Err(Error::Config("information gain top_m must be at least 1".into()));
            }
            let scores = information_gain_scores(d);
            let mut order: Vec<usize> = (0..d.n_cols()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            Ok(order.into_iter().take(*top_m).map(|j| d.feature_names()[j].clone()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn duplicated_column_keeps_one_copy() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64, ((i * 7) % 5) as f64]).collect();
        let target: Vec<u8> = (0..20).map(|i| u8::from(i > 9)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let kept = select_features(&d, &SelectionMethod::CorrelationFilter { threshold: 0.95 }).unwrap();
        assert_eq!(kept, vec!["f0".to_string(), "f2".to_string()]);
    }

    #[test]
    fn filter_keeps_more_relevant_of_pair() {
        // f1 tracks the target more closely than its near-copy f0.
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = (i % 2) as f64;
                vec![i as f64, i as f64 + 3.0 * t]
            })
            .collect();
        let target: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let kept = correlation_filter(&d, 0.9).unwrap();
        assert_eq!(kept, vec!["f1".to_string()]);
    }

    #[test]
    fn threshold_out_of_range() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[0, 1]).unwrap();
        assert!(matches!(correlation_filter(&d, 0.0), Err(Error::Config(_))));
        assert!(matches!(correlation_filter(&d, 1.5), Err(Error::Config(_))));
        assert!(correlation_filter(&d, 1.0).is_ok());
    }

    #[test]
    fn independent_column_has_near_zero_gain() {
        let mut r = crate::rng::stream(5, "test", 0);
        let col: Vec<f64> = (0..10_000).map(|_| r.gen::<f64>()).collect();
        let target: Vec<u8> = (0..10_000).map(|_| u8::from(r.gen::<f64>() < 0.3)).collect();
        assert!(information_gain(&col, &target) < 0.01);
    }

    #[test]
    fn perfect_two_point_column_recovers_target_entropy() {
        let target: Vec<u8> = (0..100).map(|i| u8::from(i < 7)).collect();
        let col: Vec<f64> = target.iter().map(|&t| t as f64 * 5.0).collect();
        let p: f64 = 0.07;
        let h = -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        assert!((information_gain(&col, &target) - h).abs() < 1e-12);
    }

    #[test]
    fn info_gain_ranking_returns_top_m() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![((i * 37) % 11) as f64, (i % 2) as f64, ((i * 13) % 7) as f64])
            .collect();
        let target: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let top = select_features(&d, &SelectionMethod::InformationGain { top_m: 1 }).unwrap();
        assert_eq!(top, vec!["f1".to_string()]);
    }
}

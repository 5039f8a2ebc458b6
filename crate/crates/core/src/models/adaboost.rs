use serde::{Deserialize, Serialize};

use super::tree::{
    check_finite, grow, predict_tree, sigmoid, ClassObjective, Criterion, EnsembleMode, GrowParams, Presorted,
    TreeEnsemble,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const EPS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaBoostParams {
    #[serde(default = "default_rounds")]
    pub n_rounds: usize,
    #[serde(default = "one")]
    pub stump_depth: usize,
}

fn default_rounds() -> usize {
    200
}

fn one() -> usize {
    1
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { n_rounds: default_rounds(), stump_depth: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub error: f64,
    pub alpha: f64,
    /// Sample-weight total after renormalization.
    pub weight_sum: f64,
}

/// Discrete AdaBoost. Each weak learner is stored as a tree whose leaves hold
/// `+alpha` or `-alpha`, so `ensemble` is an additive-margin ensemble with
/// shrinkage 2 and its margin is `2 * sum_t alpha_t h_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub ensemble: TreeEnsemble,
    pub rounds: Vec<RoundRecord>,
    pub prior: f64,
}

impl AdaBoostModel {
    /// `sum_t alpha_t h_t(x)`.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.ensemble.trees.iter().map(|t| predict_tree(t, row)).sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        if self.ensemble.trees.is_empty() {
            return self.prior;
        }
        sigmoid(2.0 * self.score(row))
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows().map(|r| self.predict_row(r)).collect()
    }
}

pub fn alpha_for_error(eps: f64) -> f64 {
    let e = eps.clamp(EPS_FLOOR, 1.0 - EPS_FLOOR);
    0.5 * ((1.0 - e) / e).ln()
}

pub fn fit_adaboost(d: &Dataset, p: &AdaBoostParams) -> Result<AdaBoostModel> {
    if d.n_rows() == 0 {
        return Err(Error::Training("cannot fit AdaBoost on an empty dataset".into()));
    }
    if p.stump_depth == 0 {
        return Err(Error::Config("stump_depth must be at least 1".into()));
    }
    check_finite(d.values())?;
    let n = d.n_rows();
    let target = d.target();
    let prior = d.class_counts().1 as f64 / n as f64;
    let pre = Presorted::new(d.values());
    let counts = vec![1u32; n];
    let params = GrowParams { max_depth: p.stump_depth, min_samples_leaf: 1, max_features: None };
    let sign = |t: u8| if t == 1 { 1.0 } else { -1.0 };

    let mut w = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut rounds = Vec::new();
    for _ in 0..p.n_rounds {
        let obj = ClassObjective { target, weight: &w, criterion: Criterion::Gini };
        let mut nodes = grow(&pre, &counts, &obj, params, None);
        let h: Vec<f64> =
            d.values().rows().map(|r| if predict_tree(&nodes, r) >= 0.5 { 1.0 } else { -1.0 }).collect();
        let eps: f64 = (0..n).filter(|&i| h[i] != sign(target[i])).map(|i| w[i]).sum();
        if eps >= 0.5 {
            break;
        }
        let alpha = alpha_for_error(eps);
        for i in 0..n {
            w[i] *= (-alpha * sign(target[i]) * h[i]).exp();
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        for node in nodes.iter_mut() {
            node.leaf_value = if node.leaf_value >= 0.5 { alpha } else { -alpha };
        }
        trees.push(nodes);
        rounds.push(RoundRecord { error: eps, alpha, weight_sum: w.iter().sum() });
        if eps <= EPS_FLOOR {
            break;
        }
    }
    let base_score = if trees.is_empty() { (prior / (1.0 - prior)).ln() } else { 0.0 };
    Ok(AdaBoostModel {
        ensemble: TreeEnsemble {
            mode: EnsembleMode::AdditiveMargin,
            base_score: if base_score.is_finite() { base_score } else { 0.0 },
            shrinkage: 2.0,
            n_features: d.n_cols(),
            trees,
        },
        rounds,
        prior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_formula() {
        assert_eq!(alpha_for_error(0.5), 0.0);
        assert!((alpha_for_error(0.1) - 0.5 * 9f64.ln()).abs() < 1e-15);
        assert!((alpha_for_error(0.1) - 1.0986).abs() < 1e-4);
        assert!(alpha_for_error(0.0).is_finite());
    }

    #[test]
    fn weights_stay_normalized_and_margin_matches() {
        let rows: Vec<Vec<f64>> = (0..120).map(|i| vec![((i * 29) % 31) as f64, ((i * 7) % 19) as f64]).collect();
        let target: Vec<u8> =
            (0..120).map(|i| u8::from(((i * 29) % 31) as f64 + ((i * 7) % 19) as f64 > 24.0 || i % 11 == 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let m = fit_adaboost(&d, &AdaBoostParams { n_rounds: 30, stump_depth: 1 }).unwrap();
        assert!(!m.rounds.is_empty());
        for r in &m.rounds {
            assert!((r.weight_sum - 1.0).abs() < 1e-12);
            assert!(r.error < 0.5);
        }
        for r in d.values().rows() {
            let via_ensemble = m.ensemble.predict_row(r);
            assert!((via_ensemble - m.predict_row(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn no_useful_learner_predicts_prior() {
        // Constant feature: no split exists, the stump is one leaf at 0.5 and
        // its weighted error is exactly 0.5.
        let d = Dataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]], &[1, 0, 1, 0]).unwrap();
        let m = fit_adaboost(&d, &AdaBoostParams::default()).unwrap();
        assert!(m.rounds.is_empty());
        assert_eq!(m.predict_row(&[1.0]), 0.5);
        assert!((m.ensemble.predict_row(&[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_stump_stops() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &[0, 0, 1, 1]).unwrap();
        let m = fit_adaboost(&d, &AdaBoostParams::default()).unwrap();
        assert_eq!(m.rounds.len(), 1);
        assert!(m.predict_row(&[3.0]) > 0.99);
        assert!(m.predict_row(&[0.0]) < 0.01);
    }
}

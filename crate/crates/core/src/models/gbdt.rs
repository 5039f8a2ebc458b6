use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{check_finite, grow, sigmoid, ClassWeight, EnsembleMode, GrowParams, Presorted, SplitObjective, TreeEnsemble};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtParams {
    #[serde(default = "default_rounds")]
    pub n_rounds: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_lambda")]
    pub lambda_l2: f64,
    #[serde(default)]
    pub gamma_min_gain: f64,
    #[serde(default = "default_subsample")]
    pub subsample: f64,
    #[serde(default = "default_min_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub class_weight: ClassWeight,
}

fn default_rounds() -> usize {
    200
}
fn default_depth() -> usize {
    4
}
fn default_lr() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_subsample() -> f64 {
    1.0
}
fn default_min_leaf() -> usize {
    1
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_rounds: default_rounds(),
            max_depth: default_depth(),
            learning_rate: default_lr(),
            lambda_l2: default_lambda(),
            gamma_min_gain: 0.0,
            subsample: default_subsample(),
            min_samples_leaf: default_min_leaf(),
            class_weight: ClassWeight::None,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config("gbdt n_rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("gbdt learning_rate {} must lie in (0, 1]", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("gbdt subsample {} must lie in (0, 1]", self.subsample)));
        }
        if !(self.lambda_l2 >= 0.0) || !(self.gamma_min_gain >= 0.0) {
            return Err(Error::Config("gbdt lambda_l2 and gamma_min_gain must be non-negative".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GbdtFit {
    pub ensemble: TreeEnsemble,
    /// Weighted mean training logloss after each round.
    pub train_logloss: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradStats {
    g: f64,
    h: f64,
    n: f64,
}

pub(crate) struct NewtonObjective<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub gamma: f64,
}

impl NewtonObjective<'_> {
    fn score(&self, s: &GradStats) -> f64 {
        s.g * s.g / (s.h + self.lambda)
    }
}

impl SplitObjective for NewtonObjective<'_> {
    type Stats = GradStats;

    fn add(&self, acc: &mut GradStats, row: usize, m: f64) {
        acc.g += m * self.grad[row];
        acc.h += m * self.hess[row];
        acc.n += m;
    }

    fn diff(&self, p: &GradStats, l: &GradStats) -> GradStats {
        GradStats { g: p.g - l.g, h: p.h - l.h, n: p.n - l.n }
    }

    fn count(&self, s: &GradStats) -> f64 {
        s.n
    }

    fn gain(&self, p: &GradStats, l: &GradStats, r: &GradStats) -> f64 {
        0.5 * (self.score(l) + self.score(r) - self.score(p)) - self.gamma
    }

    fn accept(&self, gain: f64) -> bool {
        gain > 0.0
    }

    fn leaf_value(&self, s: &GradStats) -> f64 {
        let denom = s.h + self.lambda;
        if denom > 0.0 {
            -s.g / denom
        } else {
            0.0
        }
    }

    fn is_pure(&self, _: &GradStats) -> bool {
        false
    }
}

pub fn logloss(y: u8, p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn weighted_logloss(target: &[u8], weights: &[f64], margin: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&y, &w), &m) in target.iter().zip(weights).zip(margin) {
        num += w * logloss(y, sigmoid(m));
        den += w;
    }
    num / den
}

/// Second-order gradient boosting on the logistic loss. Each round fits a
/// regression tree to the per-row gradient `p - y` and hessian `p(1 - p)`
/// (both times the row weight) at the current margins.
pub fn fit_gbdt(d: &Dataset, p: &GbdtParams, seed: u64) -> Result<GbdtFit> {
    p.validate()?;
    d.require_both_classes()?;
    check_finite(d.values())?;
    let n = d.n_rows();
    let target = d.target();
    let weights = p.class_weight.row_weights(target);
    let w_pos: f64 = target.iter().zip(&weights).filter(|(&t, _)| t == 1).map(|(_, &w)| w).sum();
    let w_all: f64 = weights.iter().sum();
    let prior = w_pos / w_all;
    let base_score = (prior / (1.0 - prior)).ln();
    if !base_score.is_finite() {
        return Err(Error::Training("degenerate class prior".into()));
    }

    let pre = Presorted::new(d.values());
    let params = GrowParams { max_depth: p.max_depth, min_samples_leaf: p.min_samples_leaf, max_features: None };
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut train_logloss = Vec::with_capacity(p.n_rounds);
    let n_sub = ((p.subsample * n as f64).round() as usize).clamp(1, n);

    for round in 0..p.n_rounds {
        for i in 0..n {
            let prob = sigmoid(margin[i]);
            grad[i] = weights[i] * (prob - target[i] as f64);
            hess[i] = weights[i] * prob * (1.0 - prob);
        }
        let counts: Vec<u32> = if n_sub < n {
            let mut r = rng::stream(seed, "gbdt-subsample", round as u64);
            let mut c = vec![0u32; n];
            for i in sample(&mut r, n, n_sub) {
                c[i] = 1;
            }
            c
        } else {
            vec![1; n]
        };
        let obj = NewtonObjective { grad: &grad, hess: &hess, lambda: p.lambda_l2, gamma: p.gamma_min_gain };
        let nodes = grow(&pre, &counts, &obj, params, None);
        for (i, row) in d.values().rows().enumerate() {
            margin[i] += p.learning_rate * super::tree::predict_tree(&nodes, row);
        }
        trees.push(nodes);
        train_logloss.push(weighted_logloss(target, &weights, &margin));
    }

    Ok(GbdtFit {
        ensemble: TreeEnsemble {
            mode: EnsembleMode::AdditiveMargin,
            base_score,
            shrinkage: p.learning_rate,
            n_features: d.n_cols(),
            trees,
        },
        train_logloss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::TreeNode;

    fn two_groups() -> Dataset {
        // x = 0: labels 1,0,0 ; x = 1: labels 1,1,0
        Dataset::from_rows(
            &[vec![0.0], vec![0.0], vec![0.0], vec![1.0], vec![1.0], vec![1.0]],
            &[1, 0, 0, 1, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn base_score_is_prior_log_odds() {
        let d = two_groups();
        let fit = fit_gbdt(&d, &GbdtParams { n_rounds: 3, ..GbdtParams::default() }, 0).unwrap();
        assert!((fit.ensemble.base_score - 0.0).abs() < 1e-15);
        let zero = fit.ensemble.truncated(0);
        for r in d.values().rows() {
            assert!((zero.predict_row(r) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn depth_one_leaf_weights_match_hand_oracle() {
        let d = two_groups();
        let lambda = 1.0;
        let fit = fit_gbdt(
            &d,
            &GbdtParams { n_rounds: 1, max_depth: 1, learning_rate: 1.0, lambda_l2: lambda, ..GbdtParams::default() },
            0,
        )
        .unwrap();
        // prior 1/2: p = 0.5, g = 0.5 - y, h = 0.25
        let left_g = (0.5 - 1.0) + 0.5 + 0.5;
        let right_g = (0.5 - 1.0) * 2.0 + 0.5;
        let h = 0.75;
        let t = &fit.ensemble.trees[0];
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].threshold, 0.5);
        assert!((t[1].leaf_value - (-left_g / (h + lambda))).abs() < 1e-15);
        assert!((t[2].leaf_value - (-right_g / (h + lambda))).abs() < 1e-15);
        let gain = 0.5 * (left_g * left_g / (h + lambda) + right_g * right_g / (h + lambda) - 0.0);
        assert!((t[0].gain - gain).abs() < 1e-15);
    }

    #[test]
    fn manual_walk_matches_prediction() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 5) as f64, (i / 5) as f64]).collect();
        let target: Vec<u8> = (0..40).map(|i| u8::from((i % 5) + (i / 5) > 5)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let fit = fit_gbdt(&d, &GbdtParams { n_rounds: 4, max_depth: 2, ..GbdtParams::default() }, 0).unwrap();
        let e = &fit.ensemble;
        let walk = |t: &[TreeNode], x: &[f64]| {
            let mut i = 0;
            while let Some(f) = t[i].feature {
                i = if x[f] <= t[i].threshold { t[i].left.unwrap() } else { t[i].right.unwrap() };
            }
            t[i].leaf_value
        };
        for r in d.values().rows() {
            let m = e.base_score + e.trees.iter().map(|t| e.shrinkage * walk(t, r)).sum::<f64>();
            let manual = 1.0 / (1.0 + (-m).exp());
            assert!((e.predict_row(r) - manual).abs() < 1e-12);
        }
    }

    #[test]
    fn logloss_is_non_increasing() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![((i * 37) % 101) as f64, ((i * 17) % 43) as f64]).collect();
        let target: Vec<u8> = (0..300).map(|i| u8::from(((i * 37) % 101) as f64 + 0.5 * ((i * 17) % 43) as f64 > 60.0 || i % 13 == 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let fit = fit_gbdt(&d, &GbdtParams { n_rounds: 50, max_depth: 3, ..GbdtParams::default() }, 0).unwrap();
        for w in fit.train_logloss.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for t in &fit.ensemble.trees {
            for n in t.iter().filter(|n| !n.is_leaf()) {
                assert!(n.gain > 0.0);
            }
        }
    }

    #[test]
    fn single_class_is_training_error() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[1, 1]).unwrap();
        assert!(matches!(fit_gbdt(&d, &GbdtParams::default(), 0), Err(Error::Training(_))));
    }

    #[test]
    fn subsample_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 10) as f64]).collect();
        let target: Vec<u8> = (0..100).map(|i| u8::from(i % 10 > 6)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let p = GbdtParams { n_rounds: 5, subsample: 0.5, ..GbdtParams::default() };
        let a = fit_gbdt(&d, &p, 3).unwrap().ensemble;
        let b = fit_gbdt(&d, &p, 3).unwrap().ensemble;
        assert_eq!(a, b);
        assert!(a.trees.iter().all(|t| t[0].cover == 50.0));
    }
}

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{
    check_finite, grow, ClassObjective, ClassWeight, Criterion, EnsembleMode, GrowParams, Presorted, TreeEnsemble,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default = "default_tree_depth")]
    pub max_depth: usize,
    #[serde(default = "one")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub class_weight: ClassWeight,
}

fn default_tree_depth() -> usize {
    6
}

fn one() -> usize {
    1
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: default_tree_depth(), min_samples_leaf: 1, criterion: Criterion::Gini, class_weight: ClassWeight::None }
    }
}

/// Number of candidate features drawn at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> Result<usize> {
        match self {
            MaxFeatures::All => Ok(n_features),
            MaxFeatures::Sqrt => Ok(((n_features as f64).sqrt().round() as usize).clamp(1, n_features.max(1))),
            MaxFeatures::Count(c) if c == 0 || c > n_features => Err(Error::Config(format!(
                "max_features {c} must lie in 1..={n_features}"
            ))),
            MaxFeatures::Count(c) => Ok(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "default_forest_depth")]
    pub max_depth: usize,
    #[serde(default = "one")]
    pub min_samples_leaf: usize,
    #[serde(default = "default_max_features")]
    pub max_features: MaxFeatures,
    #[serde(default = "yes")]
    pub bootstrap: bool,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub class_weight: ClassWeight,
}

fn default_n_trees() -> usize {
    300
}

fn default_forest_depth() -> usize {
    8
}

fn default_max_features() -> MaxFeatures {
    MaxFeatures::Sqrt
}

fn yes() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: default_n_trees(),
            max_depth: default_forest_depth(),
            min_samples_leaf: 1,
            max_features: default_max_features(),
            bootstrap: true,
            criterion: Criterion::Gini,
            class_weight: ClassWeight::None,
        }
    }
}

/// Greedy CART classification tree.
pub fn fit_tree(d: &Dataset, p: &TreeParams) -> Result<TreeEnsemble> {
    if d.n_rows() == 0 {
        return Err(Error::Training("cannot fit a tree on an empty dataset".into()));
    }
    if p.min_samples_leaf == 0 {
        return Err(Error::Config("min_samples_leaf must be at least 1".into()));
    }
    check_finite(d.values())?;
    let weights = p.class_weight.row_weights(d.target());
    let obj = ClassObjective { target: d.target(), weight: &weights, criterion: p.criterion };
    let pre = Presorted::new(d.values());
    let counts = vec![1u32; d.n_rows()];
    let params = GrowParams { max_depth: p.max_depth, min_samples_leaf: p.min_samples_leaf, max_features: None };
    let nodes = grow(&pre, &counts, &obj, params, None);
    Ok(TreeEnsemble {
        mode: EnsembleMode::AveragedProbability,
        base_score: 0.0,
        shrinkage: 1.0,
        n_features: d.n_cols(),
        trees: vec![nodes],
    })
}

/// Random forest of CART trees. Tree `t` draws its bootstrap sample and its
/// per-node feature subsets from the stream `(seed, "forest", t)`.
pub fn fit_forest(d: &Dataset, p: &ForestParams, seed: u64) -> Result<TreeEnsemble> {
    if p.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if d.n_rows() == 0 {
        return Err(Error::Training("cannot fit a forest on an empty dataset".into()));
    }
    if p.min_samples_leaf == 0 {
        return Err(Error::Config("min_samples_leaf must be at least 1".into()));
    }
    let m = p.max_features.resolve(d.n_cols())?;
    check_finite(d.values())?;
    let weights = p.class_weight.row_weights(d.target());
    let obj = ClassObjective { target: d.target(), weight: &weights, criterion: p.criterion };
    let pre = Presorted::new(d.values());
    let n = d.n_rows();
    let params = GrowParams { max_depth: p.max_depth, min_samples_leaf: p.min_samples_leaf, max_features: Some(m) };
    let trees = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, "forest", t as u64);
            let mut counts = vec![0u32; n];
            if p.bootstrap {
                for _ in 0..n {
                    counts[r.gen_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            grow(&pre, &counts, &obj, params, Some(&mut r))
        })
        .collect();
    Ok(TreeEnsemble {
        mode: EnsembleMode::AveragedProbability,
        base_score: 0.0,
        shrinkage: 1.0,
        n_features: d.n_cols(),
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::{predict_tree, TreeNode};

    fn xor() -> Dataset {
        Dataset::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]], &[0, 1, 1, 0]).unwrap()
    }

    #[test]
    fn pure_node_is_single_leaf() {
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], &[1, 1, 1]).unwrap();
        let e = fit_tree(&d, &TreeParams::default()).unwrap();
        assert_eq!(e.trees[0].len(), 1);
        assert_eq!(e.trees[0][0].leaf_value, 1.0);
    }

    /// Exhaustive oracle over every depth-2 tree shape on the XOR points:
    /// root candidates (feature, midpoint) and, per child, its best split.
    #[test]
    fn xor_depth_two_matches_exhaustive_search() {
        let d = xor();
        let e = fit_tree(&d, &TreeParams { max_depth: 2, ..TreeParams::default() }).unwrap();
        let nodes = &e.trees[0];
        for (i, row) in d.values().rows().enumerate() {
            assert_eq!(predict_tree(nodes, row), d.target()[i] as f64);
        }
        // Oracle: all root splits tie at zero gain, so the lowest
        // (feature, threshold) wins; each child is then perfectly split on the
        // other feature.
        let rows: Vec<Vec<f64>> = d.values().rows().map(<[f64]>::to_vec).collect();
        let mut best_root = None;
        for f in 0..2 {
            for thr in [0.5] {
                let gain = split_gain(&rows, d.target(), &(0..4).collect::<Vec<_>>(), f, thr);
                if best_root.is_none_or(|(g, _, _)| gain > g) {
                    best_root = Some((gain, f, thr));
                }
            }
        }
        let (g, f, thr) = best_root.unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(nodes[0].feature, Some(f));
        assert_eq!(nodes[0].threshold, thr);
        let l = nodes[0].left.unwrap();
        assert_eq!(nodes[l].feature, Some(1));
        assert!(nodes[l].gain > 0.0);
    }

    fn split_gain(rows: &[Vec<f64>], y: &[u8], idx: &[usize], f: usize, thr: f64) -> f64 {
        let g = |set: &[usize]| {
            let pos = set.iter().filter(|&&i| y[i] == 1).count() as f64;
            let n = set.len() as f64;
            if n == 0.0 {
                0.0
            } else {
                n * (1.0 - (pos / n).powi(2) - (1.0 - pos / n).powi(2))
            }
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][f] <= thr);
        g(idx) - g(&l) - g(&r)
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let target: Vec<u8> = (0..20).map(|i| u8::from(i % 3 == 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let e = fit_tree(&d, &TreeParams { max_depth: 10, min_samples_leaf: 4, ..TreeParams::default() }).unwrap();
        for n in &e.trees[0] {
            if n.is_leaf() {
                assert!(n.cover >= 4.0);
            }
        }
    }

    #[test]
    fn empty_dataset_is_training_error() {
        let d = Dataset::from_numeric(vec!["a".into()], crate::Matrix::zeros(0, 1), vec![]).unwrap();
        assert!(matches!(fit_tree(&d, &TreeParams::default()), Err(Error::Training(_))));
    }

    #[test]
    fn single_tree_forest_equals_tree() {
        let rows: Vec<Vec<f64>> = (0..80).map(|i| vec![((i * 31) % 17) as f64, ((i * 7) % 23) as f64 * 0.5]).collect();
        let target: Vec<u8> = (0..80).map(|i| u8::from((i * 31) % 17 > 8 || i % 5 == 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let tp = TreeParams { max_depth: 4, ..TreeParams::default() };
        let fp = ForestParams {
            n_trees: 1,
            max_depth: 4,
            max_features: MaxFeatures::All,
            bootstrap: false,
            ..ForestParams::default()
        };
        let t = fit_tree(&d, &tp).unwrap();
        let f = fit_forest(&d, &fp, 99).unwrap();
        assert_eq!(t.trees, f.trees);
        for r in d.values().rows() {
            assert_eq!(t.predict_row(r).to_bits(), f.predict_row(r).to_bits());
        }
    }

    #[test]
    fn forest_is_deterministic_and_validates_max_features() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 11) as f64, (i % 5) as f64]).collect();
        let target: Vec<u8> = (0..60).map(|i| u8::from(i % 7 > 3)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let p = ForestParams { n_trees: 10, max_depth: 3, ..ForestParams::default() };
        assert_eq!(fit_forest(&d, &p, 5).unwrap(), fit_forest(&d, &p, 5).unwrap());
        let bad = ForestParams { max_features: MaxFeatures::Count(4), ..p };
        assert!(matches!(fit_forest(&d, &bad, 5), Err(Error::Config(_))));
    }

    #[test]
    fn covers_add_up() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * 13 % 29) as f64]).collect();
        let target: Vec<u8> = (0..50).map(|i| u8::from(i * 13 % 29 > 14)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let e = fit_forest(&d, &ForestParams { n_trees: 5, max_depth: 4, ..ForestParams::default() }, 1).unwrap();
        for t in &e.trees {
            assert_eq!(t[0].cover, 50.0);
            for n in t.iter().filter(|n: &&TreeNode| !n.is_leaf()) {
                assert_eq!(n.cover, t[n.left.unwrap()].cover + t[n.right.unwrap()].cover);
            }
        }
    }
}

//! Shared tree representation and the exact greedy CART grower.
//!
//! Every tree learner in the crate (decision tree, forest, boosting, AdaBoost
//! stumps) grows through [`grow`], differing only in the [`SplitObjective`]
//! they plug in. Rows are presorted once per fit; each node owns a contiguous
//! range of every feature's sorted row list and children are produced by a
//! stable partition of that range, so split search stays exact over all
//! midpoints between consecutive distinct values.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Split feature; `None` for leaves.
    pub feature: Option<usize>,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Positive-class fraction for classification trees, additive margin for
    /// boosted trees. Set on every node; only leaves are read at predict time.
    pub leaf_value: f64,
    /// Training rows (with bootstrap multiplicity) routed through the node.
    pub cover: f64,
    /// Loss reduction of this node's split; 0 for leaves.
    pub gain: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { feature: None, threshold: 0.0, left: None, right: None, leaf_value: value, cover, gain: 0.0 }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize, cover: f64, gain: f64) -> Self {
        Self {
            feature: Some(feature),
            threshold,
            left: Some(left),
            right: Some(right),
            leaf_value: 0.0,
            cover,
            gain,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Index of the leaf reached by `row`.
pub fn leaf_index(nodes: &[TreeNode], row: &[f64]) -> usize {
    let mut i = 0;
    loop {
        let n = &nodes[i];
        match (n.feature, n.left, n.right) {
            (Some(f), Some(l), Some(r)) => i = if row[f] <= n.threshold { l } else { r },
            _ => return i,
        }
    }
}

pub fn predict_tree(nodes: &[TreeNode], row: &[f64]) -> f64 {
    nodes[leaf_index(nodes, row)].leaf_value
}

/// Check that `nodes` is a binary tree rooted at 0 whose split features are
/// below `n_features`.
pub fn validate_tree(nodes: &[TreeNode], n_features: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Persistence("tree has no nodes".into()));
    }
    let mut parents = vec![0usize; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        match (n.feature, n.left, n.right) {
            (None, None, None) => {}
            (Some(f), Some(l), Some(r)) => {
                if f >= n_features {
                    return Err(Error::Persistence(format!("node {i} splits on feature {f} of {n_features}")));
                }
                for c in [l, r] {
                    if c <= i || c >= nodes.len() {
                        return Err(Error::Persistence(format!("node {i} has invalid child {c}")));
                    }
                    parents[c] += 1;
                }
            }
            _ => {
                return Err(Error::Persistence(format!(
                    "node {i} must be a leaf with no children or a split with both"
                )))
            }
        }
    }
    if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
        return Err(Error::Persistence("node array is not a tree".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    /// Output is the mean leaf probability.
    AveragedProbability,
    /// Output is `base_score + shrinkage * sum(leaf)`, a log-odds margin.
    AdditiveMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub mode: EnsembleMode,
    pub base_score: f64,
    pub shrinkage: f64,
    pub n_features: usize,
    pub trees: Vec<Vec<TreeNode>>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TreeEnsemble {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean leaf probability, or the additive margin.
    pub fn raw_output(&self, row: &[f64]) -> f64 {
        match self.mode {
            EnsembleMode::AveragedProbability => {
                if self.trees.is_empty() {
                    return self.base_score;
                }
                let s: f64 = self.trees.iter().map(|t| predict_tree(t, row)).sum();
                s / self.trees.len() as f64
            }
            EnsembleMode::AdditiveMargin => {
                self.base_score + self.shrinkage * self.trees.iter().map(|t| predict_tree(t, row)).sum::<f64>()
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.mode {
            EnsembleMode::AveragedProbability => self.raw_output(row),
            EnsembleMode::AdditiveMargin => sigmoid(self.raw_output(row)),
        }
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows().map(|r| self.predict_row(r)).collect()
    }

    /// The same ensemble restricted to its first `n` trees.
    pub fn truncated(&self, n: usize) -> Self {
        Self { trees: self.trees[..n.min(self.trees.len())].to_vec(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trees {
            validate_tree(t, self.n_features)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Growing
// ---------------------------------------------------------------------------

/// Per-feature row orderings, computed once per fit.
pub(crate) struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix) -> Self {
        let columns: Vec<Vec<f64>> = (0..x.n_cols()).map(|j| x.column(j)).collect();
        let order = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { columns, order }
    }

    pub(crate) fn n_features(&self) -> usize {
        self.columns.len()
    }
}

pub(crate) trait SplitObjective {
    type Stats: Copy + Default;
    fn add(&self, acc: &mut Self::Stats, row: usize, multiplicity: f64);
    fn diff(&self, parent: &Self::Stats, left: &Self::Stats) -> Self::Stats;
    fn count(&self, s: &Self::Stats) -> f64;
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn accept(&self, gain: f64) -> bool;
    fn leaf_value(&self, s: &Self::Stats) -> f64;
    fn is_pure(&self, s: &Self::Stats) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features drawn per node; `None` means all, in index order.
    pub max_features: Option<usize>,
}

struct Grower<'a, O: SplitObjective> {
    pre: &'a Presorted,
    counts: &'a [u32],
    obj: &'a O,
    params: GrowParams,
    rng: Option<&'a mut Stream>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

impl<O: SplitObjective> Grower<'_, O> {
    fn node_stats(&self, start: usize, end: usize) -> O::Stats {
        let mut s = O::Stats::default();
        for &r in &self.order[0][start..end] {
            self.obj.add(&mut s, r as usize, self.counts[r as usize] as f64);
        }
        s
    }

    fn candidates(&mut self) -> Vec<usize> {
        let p = self.pre.n_features();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut all: Vec<usize> = (0..p).collect();
                let (chosen, _) = all.partial_shuffle(rng, m);
                let mut chosen = chosen.to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, start: usize, end: usize, parent: &O::Stats) -> Option<BestSplit> {
        let min_leaf = self.params.min_samples_leaf as f64;
        let total = self.obj.count(parent);
        let mut best: Option<BestSplit> = None;
        for f in self.candidates() {
            let col = &self.pre.columns[f];
            let ord = &self.order[f][start..end];
            let mut left = O::Stats::default();
            for w in 0..ord.len() - 1 {
                let r = ord[w] as usize;
                self.obj.add(&mut left, r, self.counts[r] as f64);
                let (a, b) = (col[r], col[ord[w + 1] as usize]);
                if a == b {
                    continue;
                }
                let n_left = self.obj.count(&left);
                if n_left < min_leaf || total - n_left < min_leaf {
                    continue;
                }
                let right = self.obj.diff(parent, &left);
                let gain = self.obj.gain(parent, &left, &right);
                if !self.obj.accept(gain) {
                    continue;
                }
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit { gain, feature: f, threshold: midpoint(a, b) });
                }
            }
        }
        best
    }

    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let col = &self.pre.columns[feature];
        for &r in &self.order[feature][start..end] {
            self.goes_left[r as usize] = col[r as usize] <= threshold;
        }
        let mut mid = start;
        for f in 0..self.order.len() {
            let range = &mut self.order[f][start..end];
            self.scratch.clear();
            let mut k = 0;
            for i in 0..range.len() {
                let r = range[i];
                if self.goes_left[r as usize] {
                    range[k] = r;
                    k += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            range[k..].copy_from_slice(&self.scratch);
            mid = start + k;
        }
        mid
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let stats = self.node_stats(start, end);
        let cover = self.obj.count(&stats);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::leaf(self.obj.leaf_value(&stats), cover));
        let min_leaf = self.params.min_samples_leaf as f64;
        if depth >= self.params.max_depth || self.obj.is_pure(&stats) || cover < 2.0 * min_leaf || end - start < 2
        {
            return id;
        }
        let Some(best) = self.best_split(start, end, &stats) else {
            return id;
        };
        let mid = self.partition(start, end, best.feature, best.threshold);
        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        let leaf_value = self.nodes[id].leaf_value;
        self.nodes[id] = TreeNode::split(best.feature, best.threshold, left, right, cover, best.gain);
        self.nodes[id].leaf_value = leaf_value;
        id
    }
}

/// Grow one tree over the rows with nonzero `counts` (bootstrap
/// multiplicities). Nodes are numbered in depth-first pre-order.
pub(crate) fn grow<O: SplitObjective>(
    pre: &Presorted,
    counts: &[u32],
    obj: &O,
    params: GrowParams,
    rng: Option<&mut Stream>,
) -> Vec<TreeNode> {
    let order: Vec<Vec<u32>> =
        pre.order.iter().map(|o| o.iter().copied().filter(|&r| counts[r as usize] > 0).collect()).collect();
    let n_active = order.first().map_or(0, Vec::len);
    let mut g = Grower {
        pre,
        counts,
        obj,
        params,
        rng,
        order,
        goes_left: vec![false; counts.len()],
        scratch: Vec::with_capacity(n_active),
        nodes: Vec::new(),
    };
    if n_active == 0 || pre.n_features() == 0 {
        let s = O::Stats::default();
        return vec![TreeNode::leaf(obj.leaf_value(&s), 0.0)];
    }
    g.build(0, n_active, 0);
    g.nodes
}

// ---------------------------------------------------------------------------
// Classification trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeight {
    #[default]
    None,
    /// Each row weighted by `n / (2 * n_class)`.
    Balanced,
}

impl ClassWeight {
    pub fn row_weights(self, target: &[u8]) -> Vec<f64> {
        match self {
            ClassWeight::None => vec![1.0; target.len()],
            ClassWeight::Balanced => {
                let n = target.len() as f64;
                let pos = target.iter().filter(|&&t| t == 1).count() as f64;
                let w = [n / (2.0 * (n - pos)), n / (2.0 * pos)];
                target.iter().map(|&t| w[t as usize]).collect()
            }
        }
    }
}

pub fn gini(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w <= 0.0 {
        return 0.0;
    }
    let p = pos / w;
    1.0 - (p * p + (1.0 - p) * (1.0 - p))
}

pub fn entropy(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w <= 0.0 {
        return 0.0;
    }
    [pos / w, neg / w].iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassStats {
    pos: f64,
    neg: f64,
    n: f64,
}

pub(crate) struct ClassObjective<'a> {
    pub target: &'a [u8],
    pub weight: &'a [f64],
    pub criterion: Criterion,
}

impl ClassObjective<'_> {
    fn impurity(&self, s: &ClassStats) -> f64 {
        match self.criterion {
            Criterion::Gini => gini(s.pos, s.neg),
            Criterion::Entropy => entropy(s.pos, s.neg),
        }
    }
}

impl SplitObjective for ClassObjective<'_> {
    type Stats = ClassStats;

    fn add(&self, acc: &mut ClassStats, row: usize, m: f64) {
        let w = self.weight[row] * m;
        if self.target[row] == 1 {
            acc.pos += w;
        } else {
            acc.neg += w;
        }
        acc.n += m;
    }

    fn diff(&self, p: &ClassStats, l: &ClassStats) -> ClassStats {
        ClassStats { pos: p.pos - l.pos, neg: p.neg - l.neg, n: p.n - l.n }
    }

    fn count(&self, s: &ClassStats) -> f64 {
        s.n
    }

    /// Weighted impurity decrease `W*I - W_l*I_l - W_r*I_r`.
    fn gain(&self, p: &ClassStats, l: &ClassStats, r: &ClassStats) -> f64 {
        (p.pos + p.neg) * self.impurity(p) - (l.pos + l.neg) * self.impurity(l) - (r.pos + r.neg) * self.impurity(r)
    }

    /// Zero-gain splits of impure nodes are kept, so a node whose every single
    /// split is uninformative (XOR) can still be resolved one level deeper.
    fn accept(&self, gain: f64) -> bool {
        gain >= 0.0
    }

    fn leaf_value(&self, s: &ClassStats) -> f64 {
        let w = s.pos + s.neg;
        if w > 0.0 {
            s.pos / w
        } else {
            0.0
        }
    }

    fn is_pure(&self, s: &ClassStats) -> bool {
        s.pos <= 0.0 || s.neg <= 0.0
    }
}

pub(crate) fn check_finite(x: &Matrix) -> Result<()> {
    if x.has_non_finite() {
        return Err(Error::Training("feature matrix contains missing or non-finite values".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_three_to_one() {
        assert_eq!(gini(3.0, 1.0), 0.375);
        assert_eq!(entropy(1.0, 1.0), 1.0);
        assert_eq!(gini(4.0, 0.0), 0.0);
    }

    #[test]
    fn midpoint_never_equals_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(1.0, 3.0), 2.0);
    }

    #[test]
    fn validate_rejects_dangling_child() {
        let mut nodes = vec![TreeNode::split(0, 0.5, 1, 2, 2.0, 0.1), TreeNode::leaf(0.0, 1.0), TreeNode::leaf(1.0, 1.0)];
        assert!(validate_tree(&nodes, 1).is_ok());
        assert!(validate_tree(&nodes, 0).is_err());
        nodes[0].right = None;
        assert!(validate_tree(&nodes, 1).is_err());
    }

    #[test]
    fn ensemble_averages_probabilities() {
        let e = TreeEnsemble {
            mode: EnsembleMode::AveragedProbability,
            base_score: 0.0,
            shrinkage: 1.0,
            n_features: 1,
            trees: [0.2, 0.6, 0.7].iter().map(|&v| vec![TreeNode::leaf(v, 1.0)]).collect(),
        };
        assert!((e.predict_row(&[0.0]) - 0.5).abs() < 1e-15);
    }
}

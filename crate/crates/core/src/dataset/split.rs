use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitPlan {
    /// `(training rows, held-out rows)` for `fold`, both ascending.
    pub fn train_test(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.folds.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

fn class_indices(d: &Dataset) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &t) in d.target().iter().enumerate() {
        out[t as usize].push(i);
    }
    out
}

/// Hold out `test_fraction` of the rows. Stratified mode rounds the held-out
/// count of each class separately, so class ratios match to within one row.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64, stratified: bool) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let mut test = Vec::new();
    if stratified {
        for (c, mut idx) in class_indices(d).into_iter().enumerate() {
            idx.shuffle(&mut rng::stream(seed, "split", c as u64));
            let n_test = (idx.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
        }
    } else {
        let mut idx: Vec<usize> = (0..d.n_rows()).collect();
        idx.shuffle(&mut rng::stream(seed, "split", 2));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
    }
    test.sort_unstable();
    let mut in_test = vec![false; d.n_rows()];
    for &i in &test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..d.n_rows()).filter(|&i| !in_test[i]).collect();
    let (train, test) = (d.select_rows(&train), d.select_rows(&test));
    for (part, name) in [(&train, "training"), (&test, "test")] {
        let (neg, pos) = part.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::Split(format!(
                "{name} part would have {neg} negatives and {pos} positives"
            )));
        }
    }
    Ok((train, test))
}

/// Stratified k-fold assignment. Rows of each class are shuffled and dealt
/// round-robin; the deal continues across classes so fold sizes also differ
/// by at most one.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Split(format!("k = {k}; need at least 2 folds")));
    }
    let classes = class_indices(d);
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::Split(format!("class {c} has {} rows, fewer than k = {k}", idx.len())));
        }
    }
    let mut folds = vec![0; d.n_rows()];
    let mut offset = 0;
    for (c, mut idx) in classes.into_iter().enumerate() {
        idx.shuffle(&mut rng::stream(seed, "kfold", c as u64));
        for (pos, &row) in idx.iter().enumerate() {
            folds[row] = (offset + pos) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(SplitPlan { folds, k, seed, stratified: true })
}

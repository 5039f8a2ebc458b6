//! In-memory tabular dataset and its ingestion, encoding, aggregation and
//! splitting operations.
//!
//! A [`Dataset`] is immutable once built. Missing cells are stored as `NaN`
//! and survive until the imputer resolves them. Categorical columns hold the
//! index of the cell's level in [`Dataset::levels`] until
//! [`encode_categoricals`] turns them into numeric columns.

mod aggregate;
mod csv_io;
mod encode;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use aggregate::{aggregate_join, Aggregation, RawTable};
pub use csv_io::{load_csv, load_csv_reader, load_csv_unlabeled, load_csv_unlabeled_reader, Categoricals, SchemaConfig};
pub use encode::{encode_categoricals, CategoricalEncoding, EncodedColumn, EncodingMode};
pub use split::{split, stratified_kfold, SplitPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
    levels: Vec<Vec<String>>,
    values: Matrix,
    target: Vec<u8>,
    row_ids: Vec<i64>,
    id_name: String,
    target_name: String,
}

impl Dataset {
    /// Assemble a dataset, checking every structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        feature_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
        levels: Vec<Vec<String>>,
        values: Matrix,
        target: Vec<u8>,
        row_ids: Vec<i64>,
        id_name: impl Into<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if values.n_cols() != n_cols || column_kinds.len() != n_cols || levels.len() != n_cols {
            return Err(Error::Schema(format!(
                "column count mismatch: {} names, {} kinds, {} level sets, {} matrix columns",
                n_cols,
                column_kinds.len(),
                levels.len(),
                values.n_cols()
            )));
        }
        if values.n_rows() != target.len() || target.len() != row_ids.len() {
            return Err(Error::Schema(format!(
                "row count mismatch: {} value rows, {} targets, {} row ids",
                values.n_rows(),
                target.len(),
                row_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n_cols);
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        if let Some(bad) = target.iter().find(|&&t| t > 1) {
            return Err(Error::Schema(format!("target value {bad} is not 0 or 1")));
        }
        Ok(Self {
            feature_names,
            column_kinds,
            levels,
            values,
            target,
            row_ids,
            id_name: id_name.into(),
            target_name: target_name.into(),
        })
    }

    /// All-numeric dataset with row ids `0..n`.
    pub fn from_numeric(feature_names: Vec<String>, values: Matrix, target: Vec<u8>) -> Result<Self> {
        let n = values.n_rows();
        let n_cols = feature_names.len();
        Self::new(
            feature_names,
            vec![ColumnKind::Numeric; n_cols],
            vec![Vec::new(); n_cols],
            values,
            target,
            (0..n as i64).collect(),
            "id",
            "target",
        )
    }

    /// Convenience constructor used heavily by tests: numeric rows with
    /// generated names `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], target: &[u8]) -> Result<Self> {
        let values = Matrix::from_rows(rows)?;
        let names = (0..values.n_cols()).map(|j| format!("f{j}")).collect();
        Self::from_numeric(names, values, target.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.n_cols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    /// Level strings per column; empty for numeric columns.
    pub fn levels(&self) -> &[Vec<String>] {
        &self.levels
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    pub fn row_ids(&self) -> &[i64] {
        &self.row_ids
    }

    pub fn id_name(&self) -> &str {
        &self.id_name
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn is_fully_numeric(&self) -> bool {
        self.column_kinds.iter().all(|k| *k == ColumnKind::Numeric)
    }

    pub fn has_missing(&self) -> bool {
        self.values.as_slice().iter().any(|v| v.is_nan())
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.target.iter().filter(|&&t| t == 1).count();
        (self.target.len() - pos, pos)
    }

    /// Fails unless both classes are present, as every fit requires.
    pub fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::Training(format!(
                "training data needs both classes, got {neg} negatives and {pos} positives"
            )));
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            column_kinds: self.column_kinds.clone(),
            levels: self.levels.clone(),
            values: self.values.select_rows(rows),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
            id_name: self.id_name.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Keep the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("unknown column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            names.to_vec(),
            idx.iter().map(|&i| self.column_kinds[i]).collect(),
            idx.iter().map(|&i| self.levels[i].clone()).collect(),
            self.values.select_columns(&idx),
            self.target.clone(),
            self.row_ids.clone(),
            self.id_name.clone(),
            self.target_name.clone(),
        )
    }

    /// Same rows and metadata with a new all-numeric feature block.
    pub(crate) fn with_numeric_values(&self, feature_names: Vec<String>, values: Matrix) -> Result<Self> {
        let n_cols = feature_names.len();
        Self::new(
            feature_names,
            vec![ColumnKind::Numeric; n_cols],
            vec![Vec::new(); n_cols],
            values,
            self.target.clone(),
            self.row_ids.clone(),
            self.id_name.clone(),
            self.target_name.clone(),
        )
    }

    /// Same columns, replacing the value matrix (kinds and levels kept).
    pub(crate) fn with_values(&self, values: Matrix) -> Result<Self> {
        Self::new(
            self.feature_names.clone(),
            self.column_kinds.clone(),
            self.levels.clone(),
            values,
            self.target.clone(),
            self.row_ids.clone(),
            self.id_name.clone(),
            self.target_name.clone(),
        )
    }

    pub(crate) fn with_rows(&self, values: Matrix, target: Vec<u8>, row_ids: Vec<i64>) -> Result<Self> {
        Self::new(
            self.feature_names.clone(),
            self.column_kinds.clone(),
            self.levels.clone(),
            values,
            target,
            row_ids,
            self.id_name.clone(),
            self.target_name.clone(),
        )
    }

    /// Append numeric columns after the existing ones.
    pub(crate) fn with_appended_columns(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_old = self.n_cols();
        let n_new = n_old + names.len();
        let mut data = Vec::with_capacity(self.n_rows() * n_new);
        for i in 0..self.n_rows() {
            data.extend_from_slice(self.values.row(i));
            data.extend(columns.iter().map(|c| c[i]));
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names);
        let mut kinds = self.column_kinds.clone();
        kinds.resize(n_new, ColumnKind::Numeric);
        let mut levels = self.levels.clone();
        levels.resize(n_new, Vec::new());
        Self::new(
            feature_names,
            kinds,
            levels,
            Matrix::new(self.n_rows(), n_new, data)?,
            self.target.clone(),
            self.row_ids.clone(),
            self.id_name.clone(),
            self.target_name.clone(),
        )
    }

    /// Write as CSV: id column, target column, then features. Missing cells are
    /// written as empty fields and categorical cells as their level string.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        csv_io::write_csv(self, path.as_ref())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        csv_io::to_csv_bytes(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Dataset::from_numeric(vec!["a".into()], m, vec![0]).is_err());
    }

    #[test]
    fn rejects_duplicate_names_and_bad_target() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            Dataset::from_numeric(vec!["a".into(), "a".into()], m.clone(), vec![0]),
            Err(Error::Schema(_))
        ));
        assert!(Dataset::from_numeric(vec!["a".into(), "b".into()], m, vec![2]).is_err());
    }

    #[test]
    fn select_columns_reorders() {
        let d = Dataset::from_rows(&[vec![1.0, 2.0, 3.0]], &[1]).unwrap();
        let s = d.select_columns(&["f2".into(), "f0".into()]).unwrap();
        assert_eq!(s.values().row(0), &[3.0, 1.0]);
        assert!(d.select_columns(&["nope".into()]).is_err());
    }
}

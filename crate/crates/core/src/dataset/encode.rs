use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    OneHot,
    Frequency,
}

impl EncodingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::OneHot => "one-hot",
            EncodingMode::Frequency => "frequency",
        }
    }
}

/// Fitted treatment of one input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EncodedColumn {
    Numeric { name: String },
    /// One indicator column `<name>_<level>` per level, levels sorted.
    OneHot { name: String, levels: Vec<String> },
    /// The level's relative frequency among non-missing fitting rows.
    Frequency { name: String, frequencies: BTreeMap<String, f64> },
}

/// Categorical encoding fitted on one dataset and replayable on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub mode: EncodingMode,
    /// In one-hot mode, columns with more levels than this fall back to
    /// frequency encoding.
    pub max_onehot_cardinality: usize,
    pub input_names: Vec<String>,
    pub columns: Vec<EncodedColumn>,
}

/// Fit an encoding on `d` and return the encoded dataset with the encoding.
pub fn encode_categoricals(
    d: &Dataset,
    mode: EncodingMode,
    max_onehot_cardinality: usize,
) -> Result<(Dataset, CategoricalEncoding)> {
    let enc = CategoricalEncoding::fit(d, mode, max_onehot_cardinality)?;
    let out = enc.apply(d)?;
    Ok((out, enc))
}

impl CategoricalEncoding {
    pub fn fit(d: &Dataset, mode: EncodingMode, max_onehot_cardinality: usize) -> Result<Self> {
        let mut columns = Vec::with_capacity(d.n_cols());
        for (j, name) in d.feature_names().iter().enumerate() {
            if d.column_kinds()[j] == ColumnKind::Numeric {
                columns.push(EncodedColumn::Numeric { name: name.clone() });
                continue;
            }
            let levels = &d.levels()[j];
            let mut counts = vec![0usize; levels.len()];
            let mut total = 0usize;
            for i in 0..d.n_rows() {
                let v = d.values().get(i, j);
                if !v.is_nan() {
                    counts[v as usize] += 1;
                    total += 1;
                }
            }
            let present: Vec<&String> =
                levels.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(l, _)| l).collect();
            if mode == EncodingMode::OneHot && present.len() <= max_onehot_cardinality {
                let mut sorted: Vec<String> = present.into_iter().cloned().collect();
                sorted.sort();
                columns.push(EncodedColumn::OneHot { name: name.clone(), levels: sorted });
            } else {
                let frequencies = levels
                    .iter()
                    .zip(&counts)
                    .filter(|(_, &c)| c > 0)
                    .map(|(l, &c)| (l.clone(), c as f64 / total as f64))
                    .collect();
                columns.push(EncodedColumn::Frequency { name: name.clone(), frequencies });
            }
        }
        let enc = Self {
            mode,
            max_onehot_cardinality,
            input_names: d.feature_names().to_vec(),
            columns,
        };
        let names = enc.output_names();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("encoded column name `{n}` collides with another column")));
            }
        }
        Ok(enc)
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for col in &self.columns {
            match col {
                EncodedColumn::Numeric { name } | EncodedColumn::Frequency { name, .. } => out.push(name.clone()),
                EncodedColumn::OneHot { name, levels } => {
                    out.extend(levels.iter().map(|l| format!("{name}_{l}")))
                }
            }
        }
        out
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.feature_names() != self.input_names.as_slice() {
            return Err(Error::Schema(format!(
                "encoding was fitted on columns {:?}, dataset has {:?}",
                self.input_names,
                d.feature_names()
            )));
        }
        for (j, col) in self.columns.iter().enumerate() {
            let expected = match col {
                EncodedColumn::Numeric { .. } => ColumnKind::Numeric,
                _ => ColumnKind::Categorical,
            };
            if d.column_kinds()[j] != expected {
                return Err(Error::Schema(format!(
                    "column `{}` is {:?} but the encoding expects {:?}",
                    self.input_names[j],
                    d.column_kinds()[j],
                    expected
                )));
            }
        }
        let names = self.output_names();
        let n_out = names.len();
        let mut out = Matrix::zeros(d.n_rows(), n_out);
        for i in 0..d.n_rows() {
            let row = d.values().row(i);
            let mut k = 0;
            for (j, col) in self.columns.iter().enumerate() {
                let v = row[j];
                match col {
                    EncodedColumn::Numeric { .. } => {
                        out.set(i, k, v);
                        k += 1;
                    }
                    EncodedColumn::OneHot { levels, .. } => {
                        if v.is_nan() {
                            for o in 0..levels.len() {
                                out.set(i, k + o, f64::NAN);
                            }
                        } else {
                            let level = &d.levels()[j][v as usize];
                            if let Ok(pos) = levels.binary_search(level) {
                                out.set(i, k + pos, 1.0);
                            }
                        }
                        k += levels.len();
                    }
                    EncodedColumn::Frequency { frequencies, .. } => {
                        let f = if v.is_nan() {
                            f64::NAN
                        } else {
                            frequencies.get(&d.levels()[j][v as usize]).copied().unwrap_or(0.0)
                        };
                        out.set(i, k, f);
                        k += 1;
                    }
                }
            }
        }
        d.with_numeric_values(names, out)
    }
}

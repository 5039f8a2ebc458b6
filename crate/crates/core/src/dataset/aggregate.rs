use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Count,
    Mean,
    Min,
    Max,
    Sum,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Count => "count",
            Aggregation::Mean => "mean",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
        }
    }
}

/// Untyped auxiliary table (for example a bureau or installments file).
#[derive(Debug, Clone)]
pub struct RawTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    /// Load a CSV; the table name is the file stem.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "aux".into());
        let file = std::fs::File::open(path)?;
        Self::from_reader(name, file)
    }

    pub fn from_reader<R: std::io::Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                row: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { name: name.into(), headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not in table `{}`", self.name)))
    }
}

#[derive(Clone, Copy)]
struct Acc {
    count: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl Default for Acc {
    fn default() -> Self {
        Self { count: 0, sum: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn finish(&self, agg: Aggregation) -> f64 {
        if agg == Aggregation::Count {
            return self.count as f64;
        }
        if self.count == 0 {
            return f64::NAN;
        }
        match agg {
            Aggregation::Count => unreachable!(),
            Aggregation::Mean => self.sum / self.count as f64,
            Aggregation::Sum => self.sum,
            Aggregation::Min => self.min,
            Aggregation::Max => self.max,
        }
    }
}

/// Aggregate `aux` rows per key and append one column per aggregation, named
/// `<aux>_<col>_<agg>`. Rows of `main` without matching aux rows get a missing
/// marker, or 0 for `count`. `count` counts non-missing values of the column.
pub fn aggregate_join(
    main: &Dataset,
    aux: &RawTable,
    key: &str,
    aggregations: &[(String, Aggregation)],
) -> Result<Dataset> {
    let main_keys: Vec<Option<i64>> = if key == main.id_name() {
        main.row_ids().iter().map(|&id| Some(id)).collect()
    } else {
        let j = main
            .column_index(key)
            .ok_or_else(|| Error::Schema(format!("key `{key}` not in main table")))?;
        main.values()
            .column(j)
            .into_iter()
            .map(|v| (v.is_finite() && v.fract() == 0.0).then_some(v as i64))
            .collect()
    };
    let key_col = aux.column(key)?;
    let agg_cols = aggregations
        .iter()
        .map(|(c, _)| aux.column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut groups: HashMap<i64, Vec<Acc>> = HashMap::new();
    for (r, row) in aux.rows.iter().enumerate() {
        let raw_key = row.get(key_col).map(|s| s.trim()).unwrap_or("");
        if raw_key.is_empty() {
            continue;
        }
        let k = raw_key.parse::<i64>().map_err(|_| Error::Parse {
            row: r + 2,
            message: format!("key `{raw_key}` in `{}` is not an integer", aux.name),
        })?;
        let accs = groups.entry(k).or_insert_with(|| vec![Acc::default(); aggregations.len()]);
        for (a, &c) in agg_cols.iter().enumerate() {
            let cell = row.get(c).map(|s| s.trim()).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v = cell.parse::<f64>().map_err(|_| {
                Error::Schema(format!(
                    "aggregation column `{}` of `{}` is not numeric (row {}: `{cell}`)",
                    aggregations[a].0,
                    aux.name,
                    r + 2
                ))
            })?;
            if !v.is_nan() {
                accs[a].push(v);
            }
        }
    }

    let empty = vec![Acc::default(); aggregations.len()];
    let mut names = Vec::with_capacity(aggregations.len());
    let mut columns = vec![Vec::with_capacity(main.n_rows()); aggregations.len()];
    for (col, agg) in aggregations {
        names.push(format!("{}_{}_{}", aux.name, col, agg.as_str()));
    }
    for k in &main_keys {
        let accs = k.and_then(|k| groups.get(&k)).unwrap_or(&empty);
        for (a, (_, agg)) in aggregations.iter().enumerate() {
            columns[a].push(accs[a].finish(*agg));
        }
    }
    main.with_appended_columns(names, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn main_ds(ids: &[i64]) -> Dataset {
        let n = ids.len();
        Dataset::new(
            vec!["x".into()],
            vec![super::super::ColumnKind::Numeric],
            vec![vec![]],
            Matrix::new(n, 1, vec![0.0; n]).unwrap(),
            vec![0; n],
            ids.to_vec(),
            "SK_ID_CURR",
            "TARGET",
        )
        .unwrap()
    }

    fn bureau(text: &str) -> RawTable {
        RawTable::from_reader("bureau", text.as_bytes()).unwrap()
    }

    #[test]
    fn mean_with_unmatched_row() {
        let aux = bureau("SK_ID_CURR,amt\n1,10\n1,30\n");
        let out = aggregate_join(&main_ds(&[1, 2]), &aux, "SK_ID_CURR", &[("amt".into(), Aggregation::Mean)]).unwrap();
        assert_eq!(out.feature_names()[1], "bureau_amt_mean");
        assert_eq!(out.values().get(0, 1), 20.0);
        assert!(out.values().get(1, 1).is_nan());
    }

    #[test]
    fn count_of_empty_set_is_zero_and_sum() {
        let aux = bureau("SK_ID_CURR,amt\n1,1\n1,2\n1,3\n");
        let out = aggregate_join(
            &main_ds(&[2, 1]),
            &aux,
            "SK_ID_CURR",
            &[("amt".into(), Aggregation::Count), ("amt".into(), Aggregation::Sum), ("amt".into(), Aggregation::Max)],
        )
        .unwrap();
        assert_eq!(out.values().row(0)[1], 0.0);
        assert!(out.values().row(0)[2].is_nan());
        assert_eq!(out.values().row(1)[1..], [3.0, 6.0, 3.0]);
        assert_eq!(out.row_ids(), &[2, 1]);
    }

    #[test]
    fn non_numeric_aggregation_column() {
        let aux = bureau("SK_ID_CURR,status\n1,Active\n");
        let r = aggregate_join(&main_ds(&[1]), &aux, "SK_ID_CURR", &[("status".into(), Aggregation::Mean)]);
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn missing_key_is_schema_error() {
        let aux = bureau("OTHER,amt\n1,1\n");
        assert!(aggregate_join(&main_ds(&[1]), &aux, "SK_ID_CURR", &[]).is_err());
    }
}

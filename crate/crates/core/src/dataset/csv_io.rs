use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_CARDINALITY_THRESHOLD: usize = 32;

/// How categorical columns are identified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Categoricals {
    /// Exactly these columns are categorical; every other column must parse
    /// as numeric.
    List(Vec<String>),
    /// Columns with at most this many distinct non-missing values, and every
    /// column holding non-numeric text, are categorical.
    Threshold(usize),
}

impl Default for Categoricals {
    fn default() -> Self {
        Categoricals::Threshold(DEFAULT_CARDINALITY_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(rename = "target")]
    pub target_column: String,
    #[serde(rename = "id")]
    pub id_column: String,
    #[serde(default)]
    pub categoricals: Categoricals,
    /// Values treated as missing, per column. `None` applies the built-in
    /// defaults to whichever of their columns exist; an explicit map must only
    /// name columns present in the header.
    #[serde(default)]
    pub sentinels: Option<BTreeMap<String, f64>>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            target_column: "TARGET".into(),
            id_column: "SK_ID_CURR".into(),
            categoricals: Categoricals::default(),
            sentinels: None,
        }
    }
}

impl SchemaConfig {
    pub fn new(target: impl Into<String>, id: impl Into<String>) -> Self {
        Self { target_column: target.into(), id_column: id.into(), ..Self::default() }
    }

    pub fn default_sentinels() -> BTreeMap<String, f64> {
        BTreeMap::from([("DAYS_EMPLOYED".to_string(), 365243.0)])
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("schema config: {e}")))
    }

    /// Copy of this schema with the categorical set frozen to `ds`'s columns,
    /// so held-out files are typed exactly like the training file.
    pub fn resolved_for(&self, ds: &Dataset) -> Self {
        let cats = ds
            .feature_names()
            .iter()
            .zip(ds.column_kinds())
            .filter(|(_, k)| **k == ColumnKind::Categorical)
            .map(|(n, _)| n.clone())
            .collect();
        Self { categoricals: Categoricals::List(cats), ..self.clone() }
    }
}

#[derive(Default)]
struct ColumnBuilder {
    numbers: Vec<f64>,
    codes: Vec<u32>,
    levels: Vec<String>,
    lookup: HashMap<String, u32>,
    distinct_numbers: HashSet<u64>,
    has_text: bool,
}

const MISSING_CODE: u32 = u32::MAX;

impl ColumnBuilder {
    fn push_missing(&mut self) {
        self.numbers.push(f64::NAN);
        self.codes.push(MISSING_CODE);
    }

    fn push(&mut self, cell: &str, sentinel: Option<f64>) {
        let trimmed = cell.trim();
        if trimmed.is_empty() {
            return self.push_missing();
        }
        let parsed = trimmed.parse::<f64>().ok();
        if let Some(v) = parsed {
            if v.is_nan() || sentinel == Some(v) {
                return self.push_missing();
            }
        }
        match parsed {
            Some(v) if v.is_finite() => {
                self.numbers.push(v);
                self.distinct_numbers.insert(v.to_bits());
            }
            _ => {
                self.numbers.push(f64::NAN);
                self.has_text = true;
            }
        }
        let code = match self.lookup.get(cell) {
            Some(&c) => c,
            None => {
                let c = self.levels.len() as u32;
                self.levels.push(cell.to_string());
                self.lookup.insert(cell.to_string(), c);
                c
            }
        };
        self.codes.push(code);
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { row: line, message: format!("{other:?}") },
    }
}

/// Read a comma-separated file with a header row into a [`Dataset`].
pub fn load_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: std::io::Read>(reader: R, schema: &SchemaConfig) -> Result<Dataset> {
    load_impl(reader, schema, true)
}

/// Like [`load_csv`], but the target column may be absent (scoring files).
/// Rows without a label get target 0.
pub fn load_csv_unlabeled(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_impl(file, schema, false)
}

pub fn load_csv_unlabeled_reader<R: std::io::Read>(reader: R, schema: &SchemaConfig) -> Result<Dataset> {
    load_impl(reader, schema, false)
}

fn load_impl<R: std::io::Read>(reader: R, schema: &SchemaConfig, labelled: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();

    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate header name `{h}`")));
        }
    }
    let find = |name: &str, role: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{role} column `{name}` not in header")))
    };
    let target_idx = match find(&schema.target_column, "target") {
        Ok(i) => Some(i),
        Err(_) if !labelled => None,
        Err(e) => return Err(e),
    };
    let id_idx = find(&schema.id_column, "id")?;

    let sentinels = match &schema.sentinels {
        Some(map) => {
            for key in map.keys() {
                if !headers.contains(key) {
                    return Err(Error::Schema(format!("sentinel column `{key}` not in header")));
                }
            }
            map.clone()
        }
        None => SchemaConfig::default_sentinels(),
    };
    if let Categoricals::List(list) = &schema.categoricals {
        for name in list {
            if !headers.contains(name) {
                return Err(Error::Schema(format!("categorical column `{name}` not in header")));
            }
        }
    }

    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| Some(i) != target_idx && i != id_idx).collect();
    let col_sentinel: Vec<Option<f64>> =
        feature_idx.iter().map(|&i| sentinels.get(&headers[i]).copied()).collect();
    let mut columns: Vec<ColumnBuilder> = feature_idx.iter().map(|_| ColumnBuilder::default()).collect();
    let mut target = Vec::new();
    let mut row_ids = Vec::new();

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let t = target_idx.map_or("", |i| record[i].trim());
        let label = match t.parse::<f64>() {
            Ok(v) if v == 0.0 => 0u8,
            Ok(v) if v == 1.0 => 1u8,
            _ if !labelled && t.is_empty() => 0u8,
            _ => {
                return Err(Error::Schema(format!(
                    "row {line}: target value `{t}` is not 0 or 1"
                )))
            }
        };
        target.push(label);
        let id = record[id_idx].trim().parse::<i64>().map_err(|_| Error::Parse {
            row: line,
            message: format!("id `{}` is not an integer", &record[id_idx]),
        })?;
        row_ids.push(id);
        for ((col, &src), sentinel) in columns.iter_mut().zip(&feature_idx).zip(&col_sentinel) {
            col.push(&record[src], *sentinel);
        }
    }

    let n_rows = target.len();
    let mut names = Vec::with_capacity(columns.len());
    let mut kinds = Vec::with_capacity(columns.len());
    let mut levels = Vec::with_capacity(columns.len());
    let mut per_column = Vec::with_capacity(columns.len());
    for (col, &src) in columns.into_iter().zip(&feature_idx) {
        let name = headers[src].clone();
        let categorical = match &schema.categoricals {
            Categoricals::List(list) => {
                let listed = list.contains(&name);
                if !listed && col.has_text {
                    return Err(Error::Schema(format!(
                        "column `{name}` holds non-numeric values but is not listed as categorical"
                    )));
                }
                listed
            }
            Categoricals::Threshold(t) => col.has_text || col.distinct_numbers.len() <= *t,
        };
        if categorical {
            kinds.push(ColumnKind::Categorical);
            per_column.push(
                col.codes.iter().map(|&c| if c == MISSING_CODE { f64::NAN } else { c as f64 }).collect::<Vec<_>>(),
            );
            levels.push(col.levels);
        } else {
            kinds.push(ColumnKind::Numeric);
            per_column.push(col.numbers);
            levels.push(Vec::new());
        }
        names.push(name);
    }

    let n_cols = names.len();
    let mut data = vec![0.0; n_rows * n_cols];
    for (j, col) in per_column.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * n_cols + j] = *v;
        }
    }
    Dataset::new(
        names,
        kinds,
        levels,
        Matrix::new(n_rows, n_cols, data)?,
        target,
        row_ids,
        schema.id_column.clone(),
        schema.target_column.clone(),
    )
}

fn write_records<W: std::io::Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![ds.id_name().to_string(), ds.target_name().to_string()];
    header.extend(ds.feature_names().iter().cloned());
    wtr.write_record(&header).map_err(csv_error)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.n_rows() {
        fields.clear();
        fields.push(ds.row_ids()[i].to_string());
        fields.push(ds.target()[i].to_string());
        for (j, v) in ds.values().row(i).iter().enumerate() {
            fields.push(if v.is_nan() {
                String::new()
            } else if ds.column_kinds()[j] == ColumnKind::Categorical {
                ds.levels()[j][*v as usize].clone()
            } else {
                v.to_string()
            });
        }
        wtr.write_record(&fields).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn to_csv_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records(ds, &mut buf)?;
    Ok(buf)
}

pub(crate) fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let bytes = to_csv_bytes(ds)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, schema: &SchemaConfig) -> Result<Dataset> {
        load_csv_reader(text.as_bytes(), schema)
    }

    fn schema() -> SchemaConfig {
        SchemaConfig::new("TARGET", "SK_ID_CURR")
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let csv = "SK_ID_CURR,TARGET,AMT_CREDIT\n1,0,100.5\n2,1,\n3,0,300\n4,1,250\n";
        let mut s = schema();
        s.categoricals = Categoricals::List(vec![]);
        let d = load(csv, &s).unwrap();
        assert_eq!(d.n_rows(), 4);
        let col = d.values().column(0);
        assert_eq!(col[0], 100.5);
        assert!(col[1].is_nan());
        assert_eq!(col[2], 300.0);
        assert_eq!(d.row_ids(), &[1, 2, 3, 4]);
        assert_eq!(d.target(), &[0, 1, 0, 1]);
    }

    #[test]
    fn days_employed_sentinel_is_missing_by_default() {
        let csv = "SK_ID_CURR,TARGET,DAYS_EMPLOYED\n1,0,-1200\n2,1,365243\n";
        let mut s = schema();
        s.categoricals = Categoricals::List(vec![]);
        let d = load(csv, &s).unwrap();
        assert_eq!(d.values().get(0, 0), -1200.0);
        assert!(d.values().get(1, 0).is_nan());
    }

    #[test]
    fn default_sentinels_tolerate_absent_columns_but_explicit_ones_do_not() {
        let csv = "SK_ID_CURR,TARGET,X\n1,0,1\n";
        assert!(load(csv, &schema()).is_ok());
        let mut s = schema();
        s.sentinels = Some(BTreeMap::from([("DAYS_EMPLOYED".into(), 365243.0)]));
        assert!(matches!(load(csv, &s), Err(Error::Schema(_))));
    }

    #[test]
    fn non_binary_target_is_schema_error() {
        let csv = "SK_ID_CURR,TARGET,X\n1,0,1\n2,2,1\n";
        assert!(matches!(load(csv, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "SK_ID_CURR,TARGET,X\n1,0,1\n2,1\n";
        match load(csv, &schema()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_is_schema_error() {
        let csv = "SK_ID_CURR,TARGET,X,X\n1,0,1,2\n";
        assert!(matches!(load(csv, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_target_column_is_schema_error() {
        let csv = "SK_ID_CURR,X\n1,1\n";
        assert!(matches!(load(csv, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn threshold_detects_text_and_low_cardinality() {
        let mut csv = String::from("SK_ID_CURR,TARGET,CODE_GENDER,AMT\n");
        for i in 0..40 {
            let g = if i % 2 == 0 { "F" } else { "M" };
            csv.push_str(&format!("{i},{},{g},{}.5\n", i % 2, i * 10));
        }
        let d = load(&csv, &schema()).unwrap();
        assert_eq!(d.column_kinds(), &[ColumnKind::Categorical, ColumnKind::Numeric]);
        assert_eq!(d.levels()[0], vec!["F".to_string(), "M".to_string()]);
        assert_eq!(d.values().get(1, 0), 1.0);
    }

    #[test]
    fn explicit_list_rejects_unlisted_text() {
        let csv = "SK_ID_CURR,TARGET,G\n1,0,F\n";
        let mut s = schema();
        s.categoricals = Categoricals::List(vec![]);
        assert!(matches!(load(csv, &s), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_json_keys() {
        let s: SchemaConfig = serde_json::from_str(
            r#"{"target":"T","id":"I","categoricals":["A"],"sentinels":{"D":-1}}"#,
        )
        .unwrap();
        assert_eq!(s.categoricals, Categoricals::List(vec!["A".into()]));
        let s: SchemaConfig = serde_json::from_str(r#"{"target":"T","id":"I","categoricals":8}"#).unwrap();
        assert_eq!(s.categoricals, Categoricals::Threshold(8));
        assert!(s.sentinels.is_none());
    }

    #[test]
    fn csv_round_trip_preserves_values_and_missing() {
        let csv = "SK_ID_CURR,TARGET,G,AMT\n5,0,F,0.1\n6,1,,\n7,0,\"M,x\",1e-7\n";
        let mut s = schema();
        s.categoricals = Categoricals::List(vec!["G".into()]);
        let d = load(csv, &s).unwrap();
        let bytes = d.to_csv_bytes().unwrap();
        let back = load(std::str::from_utf8(&bytes).unwrap(), &s).unwrap();
        assert_eq!(back.feature_names(), d.feature_names());
        assert_eq!(back.levels(), d.levels());
        for (a, b) in d.values().as_slice().iter().zip(back.values().as_slice()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(back.row_ids(), d.row_ids());
    }
}

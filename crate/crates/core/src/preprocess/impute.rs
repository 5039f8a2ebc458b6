use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Training medians per column, plus which columns get a `<col>_missing`
/// indicator appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerParams {
    pub feature_names: Vec<String>,
    pub fill: Vec<f64>,
    pub indicators: Vec<bool>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fit medians. With `missing_indicators`, every column that has a missing
/// training value also gets an indicator column on apply.
pub fn fit_imputer(d: &Dataset, missing_indicators: bool) -> Result<ImputerParams> {
    let mut fill = Vec::with_capacity(d.n_cols());
    let mut indicators = Vec::with_capacity(d.n_cols());
    for (j, name) in d.feature_names().iter().enumerate() {
        let mut present: Vec<f64> = d.values().column(j).into_iter().filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            return Err(Error::Imputer { column: name.clone() });
        }
        indicators.push(missing_indicators && present.len() < d.n_rows());
        fill.push(median(&mut present));
    }
    Ok(ImputerParams { feature_names: d.feature_names().to_vec(), fill, indicators })
}

pub fn apply_imputer(d: &Dataset, p: &ImputerParams) -> Result<Dataset> {
    if d.feature_names() != p.feature_names.as_slice() {
        return Err(Error::Schema(format!(
            "imputer fitted on {} columns {:?}, dataset has {:?}",
            p.feature_names.len(),
            p.feature_names,
            d.feature_names()
        )));
    }
    let mut values = d.values().clone();
    let extra: Vec<usize> = (0..d.n_cols()).filter(|&j| p.indicators[j]).collect();
    let mut flags = vec![vec![0.0; d.n_rows()]; extra.len()];
    for i in 0..values.n_rows() {
        for j in 0..values.n_cols() {
            if values.get(i, j).is_nan() {
                values.set(i, j, p.fill[j]);
            }
        }
        for (e, &j) in extra.iter().enumerate() {
            flags[e][i] = if d.values().get(i, j).is_nan() { 1.0 } else { 0.0 };
        }
    }
    let filled = d.with_values(values)?;
    if extra.is_empty() {
        return Ok(filled);
    }
    let names = extra.iter().map(|&j| format!("{}_missing", d.feature_names()[j])).collect();
    filled.with_appended_columns(names, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_fill() {
        let d = Dataset::from_rows(&[vec![1.0], vec![f64::NAN], vec![3.0]], &[0, 1, 0]).unwrap();
        let p = fit_imputer(&d, false).unwrap();
        assert_eq!(p.fill, vec![2.0]);
        assert_eq!(apply_imputer(&d, &p).unwrap().values().column(0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn no_missing_is_identity() {
        let d = Dataset::from_rows(&[vec![1.0, 4.0], vec![7.0, 2.0]], &[0, 1]).unwrap();
        let p = fit_imputer(&d, true).unwrap();
        assert_eq!(apply_imputer(&d, &p).unwrap(), d);
    }

    #[test]
    fn all_missing_column_names_it() {
        let d = Dataset::from_rows(&[vec![1.0, f64::NAN], vec![2.0, f64::NAN]], &[0, 1]).unwrap();
        match fit_imputer(&d, false) {
            Err(Error::Imputer { column }) => assert_eq!(column, "f1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn indicators_appended() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0], vec![f64::NAN, 6.0]], &[0, 1]).unwrap();
        let p = fit_imputer(&d, true).unwrap();
        let out = apply_imputer(&d, &p).unwrap();
        assert_eq!(out.feature_names().last().unwrap(), "f0_missing");
        assert_eq!(out.values().column(2), vec![0.0, 1.0]);
    }
}

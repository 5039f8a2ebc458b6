//! Gain importance, exact path-dependent TreeSHAP, a brute-force Shapley
//! oracle over the same value function, and the summary/dependency exports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{EnsembleMode, Model, TreeEnsemble, TreeNode};
use crate::preprocess::pearson;

/// The model's tree ensemble, or an unsupported-explainer error for kinds
/// without one.
pub fn require_tree_model(m: &Model) -> Result<&TreeEnsemble> {
    m.tree_ensemble().ok_or_else(|| {
        Error::UnsupportedExplainer(format!("{} models have no tree structure to explain", m.kind()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    SumToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceSource {
    Gain,
    MeanAbsShap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    pub normalization: Normalization,
    pub source: ImportanceSource,
}

impl ImportanceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,importance\n");
        for (f, v) in self.feature_names.iter().zip(&self.scores) {
            out.push_str(&format!("{},{v}\n", csv_field(f)));
        }
        out
    }

    pub fn normalized(&self) -> Self {
        let total: f64 = self.scores.iter().sum();
        let scores = if total > 0.0 { self.scores.iter().map(|s| s / total).collect() } else { self.scores.clone() };
        Self { scores, normalization: Normalization::SumToOne, ..self.clone() }
    }
}

/// Per feature, the mean over trees of that tree's summed split gains on it.
pub fn gain_importance(e: &TreeEnsemble, feature_names: &[String]) -> Result<ImportanceReport> {
    if feature_names.len() != e.n_features {
        return Err(Error::Explain(format!(
            "{} feature names for an ensemble over {} features",
            feature_names.len(),
            e.n_features
        )));
    }
    let mut scores = vec![0.0; e.n_features];
    for t in &e.trees {
        for n in t {
            if let Some(f) = n.feature {
                if !(n.gain.is_finite() && n.gain >= 0.0) {
                    return Err(Error::Explain(format!("split on feature {f} has no usable gain ({})", n.gain)));
                }
                scores[f] += n.gain;
            }
        }
    }
    let t = e.trees.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= t);
    Ok(ImportanceReport {
        feature_names: feature_names.to_vec(),
        scores,
        normalization: Normalization::Raw,
        source: ImportanceSource::Gain,
    })
}

/// Attributions in the ensemble's raw output units: margin for additive
/// ensembles, probability for averaged ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub values: Matrix,
    pub base_value: f64,
    pub feature_names: Vec<String>,
}

fn check_covers(e: &TreeEnsemble) -> Result<()> {
    for (ti, t) in e.trees.iter().enumerate() {
        for (ni, n) in t.iter().enumerate() {
            if !n.is_leaf() && !(n.cover > 0.0) {
                return Err(Error::Explain(format!("tree {ti} node {ni} is an internal node with zero cover")));
            }
        }
    }
    Ok(())
}

/// Cover-weighted expectation of the subtree at `i`.
fn expected_value(nodes: &[TreeNode], i: usize) -> f64 {
    let n = &nodes[i];
    match (n.left, n.right) {
        (Some(l), Some(r)) => {
            (nodes[l].cover * expected_value(nodes, l) + nodes[r].cover * expected_value(nodes, r)) / n.cover
        }
        _ => n.leaf_value,
    }
}

/// Per-tree output scale and the ensemble's constant term.
fn scale_and_offset(e: &TreeEnsemble) -> (f64, f64) {
    match e.mode {
        EnsembleMode::AdditiveMargin => (e.shrinkage, e.base_score),
        EnsembleMode::AveragedProbability if e.trees.is_empty() => (0.0, e.base_score),
        EnsembleMode::AveragedProbability => (1.0 / e.trees.len() as f64, 0.0),
    }
}

pub fn base_value(e: &TreeEnsemble) -> f64 {
    let (scale, offset) = scale_and_offset(e);
    offset + scale * e.trees.iter().map(|t| expected_value(t, 0)).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    let lf = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / lf;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / lf;
    }
}

fn unwind(path: &mut Vec<PathElem>, k: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let lf = (l + 1) as f64;
    let mut next = path[l].weight;
    for i in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * lf / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (l - i) as f64 / lf;
        } else {
            path[i].weight = path[i].weight * lf / (zero * (l - i) as f64);
        }
    }
    for i in k..l {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `k` removed.
fn unwound_sum(path: &[PathElem], k: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let lf = (l + 1) as f64;
    let mut next = path[l].weight;
    let mut total = 0.0;
    for i in (0..l).rev() {
        if one != 0.0 {
            let tmp = next * lf / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (l - i) as f64 / lf;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((l - i) as f64 / lf);
        }
    }
    total
}

fn recurse(
    nodes: &[TreeNode],
    i: usize,
    row: &[f64],
    phi: &mut [f64],
    parent: &[PathElem],
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    let n = &nodes[i];
    let (Some(f), Some(l), Some(r)) = (n.feature, n.left, n.right) else {
        for k in 1..path.len() {
            let w = unwound_sum(&path, k);
            let pe = path[k];
            if let Some(fk) = pe.feature {
                phi[fk] += w * (pe.one - pe.zero) * n.leaf_value;
            }
        }
        return;
    };
    let (hot, cold) = if row[f] <= n.threshold { (l, r) } else { (r, l) };
    let (mut iz, mut io) = (1.0, 1.0);
    if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
        iz = path[k].zero;
        io = path[k].one;
        unwind(&mut path, k);
    }
    recurse(nodes, hot, row, phi, &path, iz * nodes[hot].cover / n.cover, io, Some(f));
    recurse(nodes, cold, row, phi, &path, iz * nodes[cold].cover / n.cover, 0.0, Some(f));
}

/// SHAP values of one tree (unscaled) for one row.
pub fn tree_shap_row(nodes: &[TreeNode], row: &[f64], phi: &mut [f64]) {
    recurse(nodes, 0, row, phi, &[], 1.0, 1.0, None);
}

/// Exact path-dependent TreeSHAP. For every row,
/// `base_value + sum(phi) == e.raw_output(row)` up to rounding.
pub fn tree_shap(e: &TreeEnsemble, rows: &Matrix, feature_names: &[String]) -> Result<ShapMatrix> {
    if rows.n_cols() != e.n_features || feature_names.len() != e.n_features {
        return Err(Error::Explain(format!(
            "ensemble has {} features; rows have {} and {} names were given",
            e.n_features,
            rows.n_cols(),
            feature_names.len()
        )));
    }
    check_covers(e)?;
    let (scale, _) = scale_and_offset(e);
    let p = e.n_features;
    let per_row: Vec<Vec<f64>> = (0..rows.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = rows.row(i);
            let mut total = vec![0.0; p];
            let mut phi = vec![0.0; p];
            for t in &e.trees {
                phi.iter_mut().for_each(|v| *v = 0.0);
                tree_shap_row(t, row, &mut phi);
                for (a, b) in total.iter_mut().zip(&phi) {
                    *a += b;
                }
            }
            total.iter_mut().for_each(|v| *v *= scale);
            total
        })
        .collect();
    let data: Vec<f64> = per_row.into_iter().flatten().collect();
    Ok(ShapMatrix {
        values: Matrix::new(rows.n_rows(), p, data)?,
        base_value: base_value(e),
        feature_names: feature_names.to_vec(),
    })
}

pub const BRUTE_FORCE_MAX_FEATURES: usize = 20;

/// Expectation of the tree output when only the features in `known` (a bit
/// mask) are fixed to `row`; the others are averaged by cover.
fn conditional_expectation(nodes: &[TreeNode], i: usize, row: &[f64], known: u32) -> f64 {
    let n = &nodes[i];
    match (n.feature, n.left, n.right) {
        (Some(f), Some(l), Some(r)) => {
            if known & (1 << f) != 0 {
                conditional_expectation(nodes, if row[f] <= n.threshold { l } else { r }, row, known)
            } else {
                (nodes[l].cover * conditional_expectation(nodes, l, row, known)
                    + nodes[r].cover * conditional_expectation(nodes, r, row, known))
                    / n.cover
            }
        }
        _ => n.leaf_value,
    }
}

/// Shapley values by enumerating every feature subset. Exponential; meant as
/// a test oracle for [`tree_shap`].
pub fn brute_force_shap(e: &TreeEnsemble, row: &[f64]) -> Result<Vec<f64>> {
    let m = e.n_features;
    if m > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::Explain(format!(
            "brute-force Shapley refuses {m} features (limit {BRUTE_FORCE_MAX_FEATURES})"
        )));
    }
    if row.len() != m {
        return Err(Error::Explain(format!("row has {} values, ensemble {m} features", row.len())));
    }
    check_covers(e)?;
    let (scale, offset) = scale_and_offset(e);
    let value = |s: u32| offset + scale * e.trees.iter().map(|t| conditional_expectation(t, 0, row, s)).sum::<f64>();
    let values: Vec<f64> = (0..1u32 << m).map(value).collect();
    let mut fact = vec![1.0f64; m + 1];
    for k in 1..=m {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut phi = vec![0.0; m];
    for (j, pj) in phi.iter_mut().enumerate() {
        for s in 0..1u32 << m {
            if s & (1 << j) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = fact[size] * fact[m - size - 1] / fact[m];
            *pj += w * (values[(s | (1 << j)) as usize] - values[s as usize]);
        }
    }
    Ok(phi)
}

/// Features ranked by mean |phi|, descending; ties keep column order.
pub fn shap_summary(s: &ShapMatrix) -> Result<Vec<(String, f64)>> {
    let n = s.values.n_rows();
    if n == 0 {
        return Err(Error::Explain("empty SHAP matrix".into()));
    }
    let means: Vec<f64> =
        (0..s.values.n_cols()).map(|j| s.values.column(j).iter().map(|v| v.abs()).sum::<f64>() / n as f64).collect();
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    Ok(order.into_iter().map(|j| (s.feature_names[j].clone(), means[j])).collect())
}

pub fn summary_csv(summary: &[(String, f64)]) -> String {
    let mut out = String::from("rank,feature,mean_abs_shap\n");
    for (i, (f, v)) in summary.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, csv_field(f), v));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyTable {
    pub feature: String,
    pub color_feature: String,
    /// `(feature_value, shap_value, color_value)`, ascending in feature value.
    pub rows: Vec<(f64, f64, f64)>,
}

impl DependencyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature_value,shap_value,color_value\n");
        for (x, y, c) in &self.rows {
            out.push_str(&format!("{x},{y},{c}\n"));
        }
        out
    }
}

const DEPENDENCY_BINS: usize = 10;

/// Score of `color` as an explanation of the spread of `phi` within
/// equal-frequency bins of the plotted feature: `sum_b SS_b * r_b^2`.
fn interaction_score(order: &[usize], phi: &[f64], color: &[f64]) -> f64 {
    let n = order.len();
    let mut total = 0.0;
    for b in 0..DEPENDENCY_BINS {
        let (lo, hi) = (b * n / DEPENDENCY_BINS, (b + 1) * n / DEPENDENCY_BINS);
        if hi - lo < 2 {
            continue;
        }
        let ys: Vec<f64> = order[lo..hi].iter().map(|&i| phi[i]).collect();
        let cs: Vec<f64> = order[lo..hi].iter().map(|&i| color[i]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        let r = pearson(&cs, &ys);
        total += ss * r * r;
    }
    total
}

/// One row per dataset row: the feature's value, its SHAP value and the
/// color feature's value. `d` must hold the rows `s` was computed for, with
/// the same column names (typically the unscaled model inputs).
pub fn dependency_data(s: &ShapMatrix, d: &Dataset, feature: &str, color: Option<&str>) -> Result<DependencyTable> {
    let j = s
        .feature_names
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| Error::Explain(format!("unknown feature {feature:?}")))?;
    let dj = d.column_index(feature).ok_or_else(|| Error::Explain(format!("dataset has no column {feature:?}")))?;
    if d.n_rows() != s.values.n_rows() {
        return Err(Error::Explain(format!(
            "dataset has {} rows, SHAP matrix {}",
            d.n_rows(),
            s.values.n_rows()
        )));
    }
    let x = d.values().column(dj);
    let phi = s.values.column(j);
    let ids = d.row_ids();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(ids[a].cmp(&ids[b])));

    let color_feature = match color {
        Some(c) => {
            d.column_index(c).ok_or_else(|| Error::Explain(format!("unknown color feature {c:?}")))?;
            c.to_string()
        }
        None => {
            let mut best: Option<(f64, usize)> = None;
            for (k, name) in d.feature_names().iter().enumerate() {
                if k == dj {
                    continue;
                }
                let score = interaction_score(&order, &phi, &d.values().column(k));
                if best.is_none_or(|(bs, _)| score > bs) {
                    best = Some((score, k));
                }
                let _ = name;
            }
            best.map_or_else(|| feature.to_string(), |(_, k)| d.feature_names()[k].clone())
        }
    };
    let cvals = d.values().column(d.column_index(&color_feature).expect("color column checked above"));
    Ok(DependencyTable {
        feature: feature.to_string(),
        color_feature,
        rows: order.iter().map(|&i| (x[i], phi[i], cvals[i])).collect(),
    })
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

const W: f64 = 800.0;
const H: f64 = 600.0;
const MARGIN_L: f64 = 150.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let (r0, g0, b0) = (30.0, 136.0, 229.0);
    let (r1, g1, b1) = (255.0, 13.0, 87.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r0, r1), mix(g0, g1), mix(b0, b1))
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in v.filter(|x| x.is_finite()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi <= lo {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_header(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN_L, H - MARGIN_B, W - MARGIN_R, MARGIN_T);
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"20\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        (x0 + x1) / 2.0,
        H - 20.0,
        escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
}

/// Scatter of SHAP value against feature value, colored by the color feature.
pub fn dependency_svg(t: &DependencyTable) -> String {
    let (xl, xh) = range(t.rows.iter().map(|r| r.0));
    let (yl, yh) = range(t.rows.iter().map(|r| r.1));
    let (cl, ch) = range(t.rows.iter().map(|r| r.2));
    let sx = |x: f64| MARGIN_L + (x - xl) / (xh - xl) * (W - MARGIN_L - MARGIN_R);
    let sy = |y: f64| H - MARGIN_B - (y - yl) / (yh - yl) * (H - MARGIN_T - MARGIN_B);
    let mut out = String::new();
    svg_header(&mut out);
    axes(&mut out, &t.feature, &format!("SHAP value for {}", t.feature));
    for &(x, y, c) in &t.rows {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            sx(x),
            sy(y),
            ramp((c - cl) / (ch - cl))
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">color: {}</text>\n</svg>\n",
        W - MARGIN_R,
        MARGIN_T - 10.0,
        escape(&t.color_feature)
    ));
    out
}

/// One horizontal band per top feature: points at their SHAP value, colored
/// by the feature's own value.
pub fn summary_svg(s: &ShapMatrix, d: &Dataset, top_n: usize) -> Result<String> {
    let summary = shap_summary(s)?;
    let shown: Vec<&(String, f64)> = summary.iter().take(top_n.max(1)).collect();
    let (xl, xh) = range(s.values.as_slice().iter().copied());
    let sx = |x: f64| MARGIN_L + (x - xl) / (xh - xl) * (W - MARGIN_L - MARGIN_R);
    let band = (H - MARGIN_T - MARGIN_B) / shown.len() as f64;
    let mut out = String::new();
    svg_header(&mut out);
    axes(&mut out, "SHAP value", "");
    for (b, (name, _)) in shown.iter().enumerate() {
        let j = s.feature_names.iter().position(|n| n == name).expect("ranked name comes from the matrix");
        let colors = d.column_index(name).map(|k| d.values().column(k));
        let (cl, ch) = colors.as_ref().map_or((0.0, 1.0), |c| range(c.iter().copied()));
        let yc = MARGIN_T + band * (b as f64 + 0.5);
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            yc + 4.0,
            escape(name)
        ));
        for i in 0..s.values.n_rows() {
            // deterministic vertical jitter
            let h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
            let jitter = (h as f64 / (1u64 << 24) as f64 - 0.5) * band * 0.6;
            let c = colors.as_ref().map_or(0.5, |c| (c[i] - cl) / (ch - cl));
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
                sx(s.values.get(i, j)),
                yc + jitter,
                ramp(c)
            ));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

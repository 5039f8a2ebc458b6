//! Metrics, cross-validation, the algorithm comparison and the depth sweep,
//! with their Markdown/CSV renderings.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::pipeline::{fit_pipeline, ModelSpec, PipelineSpec};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const PLACEHOLDER: &str = "external — not implemented";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Predicted positive iff `probability >= threshold`.
pub fn confusion(labels: &[u8], probabilities: &[f64], threshold: f64) -> Result<ConfusionCounts> {
    if labels.is_empty() {
        return Err(Error::Evaluation("no rows to evaluate".into()));
    }
    if labels.len() != probabilities.len() {
        return Err(Error::Evaluation(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probabilities.len()
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Evaluation(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut c = ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&y, &p) in labels.iter().zip(probabilities) {
        match (y == 1, p >= threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `tp + fp == 0`; precision reported as 0.
    pub precision_degenerate: bool,
    /// `tp + fn == 0`; recall reported as 0.
    pub recall_degenerate: bool,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let total = c.total() as f64;
    let accuracy = if total > 0.0 { (c.tp + c.tn) as f64 / total } else { 0.0 };
    let precision_degenerate = c.tp + c.fp == 0;
    let recall_degenerate = c.tp + c.fn_ == 0;
    let precision = if precision_degenerate { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let recall = if recall_degenerate { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    Metrics { accuracy, precision, recall, f1: f1_score(precision, recall), precision_degenerate, recall_degenerate }
}

/// Mann-Whitney AUC: `(correct pairs + 0.5 * tied pairs) / (n_pos * n_neg)`.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Evaluation(format!("{} labels but {} scores", labels.len(), scores.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Evaluation("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut correct, mut ties, mut neg_below) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        correct += p * neg_below;
        ties += p * q;
        neg_below += q;
        i = j;
    }
    Ok((correct as f64 + 0.5 * ties as f64) / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub kind: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub threshold: f64,
    pub split: String,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub smote: bool,
    pub n_train: usize,
    pub n_eval: usize,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
}

impl MetricsRecord {
    /// Score `probs` against `labels` at threshold 0.5.
    pub fn from_predictions(
        spec: &PipelineSpec,
        split: String,
        seed: u64,
        n_train: usize,
        labels: &[u8],
        probs: &[f64],
    ) -> Result<Self> {
        let c = confusion(labels, probs, DEFAULT_THRESHOLD)?;
        let m = metrics(&c);
        Ok(Self {
            method: spec.display_name(),
            kind: spec.model.tag().to_string(),
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auc: roc_auc(labels, probs)?,
            threshold: DEFAULT_THRESHOLD,
            split,
            hyperparameters: spec.model.hyperparameters(),
            seed,
            smote: spec.smote.is_some(),
            n_train,
            n_eval: labels.len(),
            precision_degenerate: m.precision_degenerate,
            recall_degenerate: m.recall_degenerate,
        })
    }
}

/// Fit `spec` on `train` and score it on `test` at threshold 0.5.
pub fn evaluate_spec(spec: &PipelineSpec, train: &Dataset, test: &Dataset, seed: u64, split: &str) -> Result<MetricsRecord> {
    let fitted = fit_pipeline(train, spec, seed)?;
    let probs = fitted.predict_proba(test)?;
    MetricsRecord::from_predictions(spec, split.to_string(), seed, train.n_rows(), test.target(), &probs)
}

/// One record per fold followed by their unweighted mean. The mean record's
/// F1 is recomputed from the mean precision and recall.
pub fn cross_validate(d: &Dataset, spec: &PipelineSpec, plan: &SplitPlan, seed: u64) -> Result<Vec<MetricsRecord>> {
    if plan.folds.len() != d.n_rows() {
        return Err(Error::Split(format!("plan covers {} rows, dataset has {}", plan.folds.len(), d.n_rows())));
    }
    let folds: Vec<MetricsRecord> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (train_idx, test_idx) = plan.train_test(f);
            let (train, test) = (d.select_rows(&train_idx), d.select_rows(&test_idx));
            let descriptor = format!("fold {}/{} seed={}", f + 1, plan.k, plan.seed);
            evaluate_spec(spec, &train, &test, seed, &descriptor).map_err(|e| Error::Fold { fold: f, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let k = folds.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| folds.iter().map(f).sum::<f64>() / k;
    let (precision, recall) = (mean(|r| r.precision), mean(|r| r.recall));
    let summary = MetricsRecord {
        accuracy: mean(|r| r.accuracy),
        precision,
        recall,
        f1: f1_score(precision, recall),
        auc: mean(|r| r.auc),
        split: format!("mean of {} folds seed={}", plan.k, plan.seed),
        n_train: (folds.iter().map(|r| r.n_train).sum::<usize>() as f64 / k).round() as usize,
        n_eval: (folds.iter().map(|r| r.n_eval).sum::<usize>() as f64 / k).round() as usize,
        precision_degenerate: folds.iter().any(|r| r.precision_degenerate),
        recall_degenerate: folds.iter().any(|r| r.recall_degenerate),
        ..folds[0].clone()
    };
    let mut out = folds;
    out.push(summary);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ReportRow {
    Ok(MetricsRecord),
    Placeholder { method: String, kind: String },
    Failed { method: String, kind: String, error: String, message: String },
}

impl ReportRow {
    pub fn method(&self) -> &str {
        match self {
            ReportRow::Ok(r) => &r.method,
            ReportRow::Placeholder { method, .. } | ReportRow::Failed { method, .. } => method,
        }
    }

    pub fn record(&self) -> Option<&MetricsRecord> {
        match self {
            ReportRow::Ok(r) => Some(r),
            _ => None,
        }
    }
}

/// Evaluate every spec on the shared split, in the given order. External
/// kinds become placeholder rows and failures become error rows; neither
/// stops the run.
pub fn compare_algorithms(
    train: &Dataset,
    test: &Dataset,
    specs: &[PipelineSpec],
    seed: u64,
    split: &str,
) -> Result<Vec<ReportRow>> {
    if specs.is_empty() {
        return Err(Error::Config("comparison needs at least one model spec".into()));
    }
    Ok(specs
        .par_iter()
        .map(|spec| {
            let method = spec.display_name();
            let kind = spec.model.tag().to_string();
            if spec.model.kind().is_none() {
                return ReportRow::Placeholder { method, kind };
            }
            match evaluate_spec(spec, train, test, seed, split) {
                Ok(r) => ReportRow::Ok(r),
                Err(e) => ReportRow::Failed { method, kind, error: e.class().to_string(), message: e.to_string() },
            }
        })
        .collect())
}

/// [`compare_algorithms`] with each row being the k-fold mean record.
pub fn compare_algorithms_cv(d: &Dataset, specs: &[PipelineSpec], plan: &SplitPlan, seed: u64) -> Result<Vec<ReportRow>> {
    if specs.is_empty() {
        return Err(Error::Config("comparison needs at least one model spec".into()));
    }
    Ok(specs
        .iter()
        .map(|spec| {
            let method = spec.display_name();
            let kind = spec.model.tag().to_string();
            if spec.model.kind().is_none() {
                return ReportRow::Placeholder { method, kind };
            }
            match cross_validate(d, spec, plan, seed) {
                Ok(mut r) => ReportRow::Ok(r.pop().expect("mean record")),
                Err(e) => ReportRow::Failed { method, kind, error: e.class().to_string(), message: e.to_string() },
            }
        })
        .collect())
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn render_comparison_markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from("| Method | ACC | Precision | Recall |\n|---|---|---|---|\n");
    for row in rows {
        let line = match row {
            ReportRow::Ok(r) => {
                format!("| {} | {} | {} | {} |\n", r.method, fmt4(r.accuracy), fmt4(r.precision), fmt4(r.recall))
            }
            ReportRow::Placeholder { method, .. } => format!("| {method} | {PLACEHOLDER} | | |\n"),
            ReportRow::Failed { method, error, .. } => format!("| {method} | error: {error} | | |\n"),
        };
        s.push_str(&line);
    }
    s
}

const CSV_HEADER: [&str; 17] = [
    "method",
    "kind",
    "status",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc",
    "threshold",
    "split",
    "seed",
    "smote",
    "n_train",
    "n_eval",
    "precision_degenerate",
    "recall_degenerate",
    "hyperparameters",
];

fn record_fields(r: &MetricsRecord) -> Vec<String> {
    vec![
        r.method.clone(),
        r.kind.clone(),
        "ok".into(),
        r.accuracy.to_string(),
        r.precision.to_string(),
        r.recall.to_string(),
        r.f1.to_string(),
        r.auc.to_string(),
        r.threshold.to_string(),
        r.split.clone(),
        r.seed.to_string(),
        r.smote.to_string(),
        r.n_train.to_string(),
        r.n_eval.to_string(),
        r.precision_degenerate.to_string(),
        r.recall_degenerate.to_string(),
        r.hyperparameters.to_string(),
    ]
}

fn write_csv(rows: impl IntoIterator<Item = Vec<String>>, header: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn records_csv(records: &[MetricsRecord]) -> Result<String> {
    write_csv(records.iter().map(record_fields), &CSV_HEADER)
}

pub fn render_comparison_csv(rows: &[ReportRow]) -> Result<String> {
    let blank = |method: &str, kind: &str, status: &str, msg: &str| {
        let mut v = vec![String::new(); CSV_HEADER.len()];
        v[0] = method.to_string();
        v[1] = kind.to_string();
        v[2] = status.to_string();
        v[CSV_HEADER.len() - 1] = msg.to_string();
        v
    };
    write_csv(
        rows.iter().map(|row| match row {
            ReportRow::Ok(r) => record_fields(r),
            ReportRow::Placeholder { method, kind } => blank(method, kind, PLACEHOLDER, ""),
            ReportRow::Failed { method, kind, error, message } => blank(method, kind, &format!("error:{error}"), message),
        }),
        &CSV_HEADER,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub depths: Vec<usize>,
    pub records: Vec<MetricsRecord>,
    /// Depth with the highest F1; ties go to the smaller depth.
    pub selected: usize,
}

fn with_depth(spec: &PipelineSpec, depth: usize) -> Result<PipelineSpec> {
    let mut s = spec.clone();
    match &mut s.model {
        ModelSpec::Gbdt(p) => p.max_depth = depth,
        ModelSpec::Forest(p) => p.max_depth = depth,
        ModelSpec::Tree(p) => p.max_depth = depth,
        other => {
            return Err(Error::Config(format!("depth sweep needs a tree-based spec, got {}", other.tag())));
        }
    }
    Ok(s)
}

/// Train the same spec at each depth and score it on `test`.
pub fn depth_sweep(
    train: &Dataset,
    test: &Dataset,
    spec: &PipelineSpec,
    depths: &[usize],
    seed: u64,
    split: &str,
) -> Result<SweepReport> {
    if depths.is_empty() {
        return Err(Error::Config("depth sweep needs at least one depth".into()));
    }
    let specs: Vec<PipelineSpec> = depths.iter().map(|&d| with_depth(spec, d)).collect::<Result<_>>()?;
    let records: Vec<MetricsRecord> =
        specs.par_iter().map(|s| evaluate_spec(s, train, test, seed, split)).collect::<Result<_>>()?;
    Ok(SweepReport { depths: depths.to_vec(), selected: select_depth(depths, &records), records })
}

/// Depth with the highest F1; ties go to the smaller depth.
pub fn select_depth(depths: &[usize], records: &[MetricsRecord]) -> usize {
    let mut selected = 0;
    for i in 1..depths.len() {
        let (fi, fs) = (records[i].f1, records[selected].f1);
        if fi > fs || (fi == fs && depths[i] < depths[selected]) {
            selected = i;
        }
    }
    depths[selected]
}

/// [`depth_sweep`] scored by the k-fold mean record at each depth.
pub fn depth_sweep_cv(d: &Dataset, spec: &PipelineSpec, depths: &[usize], plan: &SplitPlan, seed: u64) -> Result<SweepReport> {
    if depths.is_empty() {
        return Err(Error::Config("depth sweep needs at least one depth".into()));
    }
    let specs: Vec<PipelineSpec> = depths.iter().map(|&k| with_depth(spec, k)).collect::<Result<_>>()?;
    let records: Vec<MetricsRecord> = specs
        .iter()
        .map(|s| cross_validate(d, s, plan, seed).map(|mut r| r.pop().expect("mean record")))
        .collect::<Result<_>>()?;
    Ok(SweepReport { depths: depths.to_vec(), selected: select_depth(depths, &records), records })
}

pub fn render_sweep_markdown(r: &SweepReport) -> String {
    let mut s = String::from("| Max_depth | ACC | Precision | Recall | F1 |\n|---|---|---|---|---|\n");
    for (d, rec) in r.depths.iter().zip(&r.records) {
        s.push_str(&format!(
            "| {d} | {} | {} | {} | {} |\n",
            fmt4(rec.accuracy),
            fmt4(rec.precision),
            fmt4(rec.recall),
            fmt4(rec.f1)
        ));
    }
    s.push_str(&format!("\nselected: {}\n", r.selected));
    s
}

pub fn render_sweep_csv(r: &SweepReport) -> Result<String> {
    let mut header = vec!["max_depth"];
    header.extend_from_slice(&CSV_HEADER);
    write_csv(
        r.depths.iter().zip(&r.records).map(|(d, rec)| {
            let mut v = vec![d.to_string()];
            v.extend(record_fields(rec));
            v
        }),
        &header,
    )
}

/// SHA-256 of the compact JSON form (object keys sorted).
pub fn spec_hash<T: Serialize>(spec: &T) -> String {
    let v = serde_json::to_value(spec).unwrap_or(serde_json::Value::Null);
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// Run description written next to every report. `timestamp` is the only
/// field that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub split: String,
    pub spec_hashes: BTreeMap<String, String>,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, split: &str) -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            command: command.into(),
            seed,
            split: split.into(),
            spec_hashes: BTreeMap::new(),
            hyperparameters: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            timestamp: format!("unix:{secs}"),
        }
    }

    pub fn add_spec(&mut self, name: &str, spec: &PipelineSpec) {
        self.spec_hashes.insert(name.to_string(), spec_hash(spec));
        self.hyperparameters.insert(name.to_string(), serde_json::to_value(spec).unwrap_or_default());
    }
}

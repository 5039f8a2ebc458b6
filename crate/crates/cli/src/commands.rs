use std::path::{Path, PathBuf};

use credit_core::dataset::{aggregate_join, load_csv, load_csv_unlabeled, split, stratified_kfold, RawTable};
use credit_core::eval::{
    compare_algorithms, compare_algorithms_cv, cross_validate, depth_sweep, depth_sweep_cv, render_comparison_csv,
    render_comparison_markdown, render_sweep_csv, render_sweep_markdown, MetricsRecord, ReportRow, RunManifest,
};
use credit_core::explain::{
    dependency_data, dependency_svg, gain_importance, require_tree_model, shap_summary, summary_csv, summary_svg,
    tree_shap,
};
use credit_core::pipeline::{fit_pipeline, JoinSpec, ModelSpec};
use credit_core::{Dataset, Error, ModelArtifact, Result, SchemaConfig};
use serde::Serialize;

use crate::config::{RunConfig, SplitConfig};
use crate::output::{write_atomic, write_json};

pub const SAMPLE_APPLICATION: &str = "application_train.csv";
pub const SAMPLE_BUREAU: &str = "bureau.csv";

pub struct Ingested {
    pub data: Dataset,
    /// Schema with the categorical set frozen to the training file.
    pub schema: SchemaConfig,
    pub joins: Vec<JoinSpec>,
}

pub fn ingest(cfg: &RunConfig) -> Result<Ingested> {
    let raw = load_csv(&cfg.data.train, &cfg.schema)?;
    let schema = cfg.schema.resolved_for(&raw);
    let mut data = raw;
    let mut joins = Vec::new();
    for aux in &cfg.data.aux {
        let table = RawTable::from_csv(&aux.path)?;
        data = aggregate_join(&data, &table, &aux.key, &aux.aggregations)?;
        joins.push(JoinSpec { table: table.name.clone(), key: aux.key.clone(), aggregations: aux.aggregations.clone() });
    }
    Ok(Ingested { data, schema, joins })
}

/// Read a scoring file the way the artifact's training file was read, and
/// replay its joins from the given auxiliary files (matched by file stem).
pub fn load_for_artifact(a: &ModelArtifact, data: &Path, aux: &[PathBuf]) -> Result<Dataset> {
    let schema = a.preprocessing.schema.clone().unwrap_or_default();
    let mut d = load_csv_unlabeled(data, &schema)?;
    for join in &a.preprocessing.joins {
        let path = aux
            .iter()
            .find(|p| p.file_stem().is_some_and(|s| s.to_string_lossy() == join.table))
            .ok_or_else(|| {
                Error::Config(format!("artifact joins table `{}`; pass it with --aux <{}.csv>", join.table, join.table))
            })?;
        let table = RawTable::from_csv(path)?;
        d = aggregate_join(&d, &table, &join.key, &join.aggregations)?;
    }
    Ok(d)
}

fn manifest_name(command: &str) -> String {
    format!("{command}_manifest.json")
}

fn finish(out: &Path, mut m: RunManifest, outputs: &[&str]) -> Result<()> {
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    write_json(&out.join(manifest_name(&m.command)), &m)
}

pub fn generate_sample(out: &Path, rows: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let t = credit_core::synth::generate(rows, seed)?;
    let app = out.join(SAMPLE_APPLICATION);
    let bureau = out.join(SAMPLE_BUREAU);
    write_atomic(&app, &t.application)?;
    write_atomic(&bureau, &t.bureau)?;
    Ok(vec![app, bureau])
}

#[derive(Serialize)]
struct ColumnSummary<'a> {
    name: &'a str,
    kind: credit_core::ColumnKind,
    missing: usize,
    levels: usize,
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    rows: usize,
    columns: usize,
    negatives: usize,
    positives: usize,
    joins: &'a [JoinSpec],
    features: Vec<ColumnSummary<'a>>,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let ing = ingest(cfg)?;
    let d = &ing.data;
    let out = &cfg.output_dir;
    write_atomic(&out.join("ingested.csv"), &d.to_csv_bytes()?)?;
    write_json(&out.join("schema.json"), &ing.schema)?;
    let (negatives, positives) = d.class_counts();
    let features = d
        .feature_names()
        .iter()
        .enumerate()
        .map(|(j, name)| ColumnSummary {
            name,
            kind: d.column_kinds()[j],
            missing: d.values().column(j).iter().filter(|v| v.is_nan()).count(),
            levels: d.levels()[j].len(),
        })
        .collect();
    let summary =
        IngestSummary { rows: d.n_rows(), columns: d.n_cols(), negatives, positives, joins: &ing.joins, features };
    write_json(&out.join("ingest_summary.json"), &summary)?;
    let m = RunManifest::new("ingest", cfg.seed, "none");
    finish(out, m, &["ingested.csv", "schema.json", "ingest_summary.json"])
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let ing = ingest(cfg)?;
    let spec = cfg.pipeline(cfg.first_model());
    if spec.model.kind().is_none() {
        return Err(Error::NotImplemented(format!("{}: external, not implemented", spec.model.tag())));
    }
    let seed = cfg.seed;
    let split_desc = cfg.split.describe(seed);
    let (fitted, records): (_, Vec<MetricsRecord>) = match cfg.split {
        SplitConfig::Holdout { test_fraction, stratified } => {
            let (train, test) = split(&ing.data, test_fraction, seed, stratified)?;
            let fitted = fit_pipeline(&train, &spec, seed)?;
            let probs = fitted.predict_proba(&test)?;
            let rec =
                MetricsRecord::from_predictions(&spec, split_desc.clone(), seed, train.n_rows(), test.target(), &probs)?;
            (fitted, vec![rec])
        }
        SplitConfig::Kfold { k } => {
            let plan = stratified_kfold(&ing.data, k, seed)?;
            let records = cross_validate(&ing.data, &spec, &plan, seed)?;
            (fit_pipeline(&ing.data, &spec, seed)?, records)
        }
    };
    let out = &cfg.output_dir;
    let artifact = ModelArtifact::from_trained(&fitted, Some(ing.schema), ing.joins);
    write_atomic(&out.join("model.json"), artifact.to_json()?.as_bytes())?;
    write_json(&out.join("metrics.json"), &records)?;
    let mut m = RunManifest::new("train", seed, &split_desc);
    m.add_spec(spec.model.tag(), &spec);
    if matches!(cfg.split, SplitConfig::Kfold { .. }) {
        m.notes.push("model.json is refitted on all rows; metrics are per fold plus their mean".into());
    }
    finish(out, m, &["model.json", "metrics.json"])
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<()> {
    let ing = ingest(cfg)?;
    let specs: Vec<_> = cfg.comparison_models().into_iter().map(|m| cfg.pipeline(m)).collect();
    let seed = cfg.seed;
    let split_desc = cfg.split.describe(seed);
    let rows = match cfg.split {
        SplitConfig::Holdout { test_fraction, stratified } => {
            let (train, test) = split(&ing.data, test_fraction, seed, stratified)?;
            compare_algorithms(&train, &test, &specs, seed, &split_desc)?
        }
        SplitConfig::Kfold { k } => {
            let plan = stratified_kfold(&ing.data, k, seed)?;
            compare_algorithms_cv(&ing.data, &specs, &plan, seed)?
        }
    };
    let out = &cfg.output_dir;
    write_atomic(&out.join("comparison.md"), render_comparison_markdown(&rows).as_bytes())?;
    write_atomic(&out.join("comparison.csv"), render_comparison_csv(&rows)?.as_bytes())?;
    write_json(&out.join("comparison.json"), &rows)?;
    let mut m = RunManifest::new("compare", seed, &split_desc);
    for (i, s) in specs.iter().enumerate() {
        m.add_spec(&format!("{i}:{}", s.model.tag()), s);
    }
    m.notes.push("all rows share one split and one seed; metrics at threshold 0.5".into());
    let mut outputs = vec!["comparison.md", "comparison.csv", "comparison.json"];
    if let Some(i) = best_tree_row(&specs, &rows) {
        // the model to explain by default: best F1 among tree-based rows
        let data = match cfg.split {
            SplitConfig::Holdout { test_fraction, stratified } => split(&ing.data, test_fraction, seed, stratified)?.0,
            SplitConfig::Kfold { .. } => ing.data.clone(),
        };
        let fitted = fit_pipeline(&data, &specs[i], seed)?;
        let artifact = ModelArtifact::from_trained(&fitted, Some(ing.schema), ing.joins);
        write_atomic(&out.join("best_model.json"), artifact.to_json()?.as_bytes())?;
        m.notes.push(format!("best_model.json holds row {i} ({}), the best-F1 tree-based model", specs[i].display_name()));
        outputs.push("best_model.json");
    }
    finish(out, m, &outputs)
}

/// Index of the tree-based row with the highest F1; ties go to the earlier row.
fn best_tree_row(specs: &[credit_core::PipelineSpec], rows: &[ReportRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (spec, row)) in specs.iter().zip(rows).enumerate() {
        let tree = spec.model.kind().is_some_and(|k| k.is_tree_based());
        if let (true, Some(r)) = (tree, row.record()) {
            if best.is_none_or(|(_, f)| r.f1 > f) {
                best = Some((i, r.f1));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let ing = ingest(cfg)?;
    let spec = cfg.pipeline(cfg.first_model());
    let seed = cfg.seed;
    let split_desc = cfg.split.describe(seed);
    let report = match cfg.split {
        SplitConfig::Holdout { test_fraction, stratified } => {
            let (train, test) = split(&ing.data, test_fraction, seed, stratified)?;
            depth_sweep(&train, &test, &spec, &cfg.depths, seed, &split_desc)?
        }
        SplitConfig::Kfold { k } => {
            let plan = stratified_kfold(&ing.data, k, seed)?;
            depth_sweep_cv(&ing.data, &spec, &cfg.depths, &plan, seed)?
        }
    };
    let out = &cfg.output_dir;
    write_atomic(&out.join("sweep.md"), render_sweep_markdown(&report).as_bytes())?;
    write_atomic(&out.join("sweep.csv"), render_sweep_csv(&report)?.as_bytes())?;
    write_json(&out.join("sweep.json"), &report)?;
    let mut m = RunManifest::new("sweep", seed, &split_desc);
    m.add_spec(spec.model.tag(), &spec);
    m.notes.push("F1 is reported next to ACC, Precision and Recall; the selected depth maximizes F1".into());
    finish(out, m, &["sweep.md", "sweep.csv", "sweep.json"])
}

#[derive(Debug, Clone, Default)]
pub struct ExplainArgs {
    pub artifact: PathBuf,
    pub data: PathBuf,
    pub aux: Vec<PathBuf>,
    pub summary: bool,
    pub dependency: Option<String>,
    pub color: Option<String>,
    pub svg: bool,
    pub top: usize,
    pub out: PathBuf,
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let artifact = ModelArtifact::load(&a.artifact)?;
    let ensemble = require_tree_model(&artifact.model)?;
    let d = load_for_artifact(&artifact, &a.data, &a.aux)?;
    let unscaled = artifact.preprocessing.pipeline.transform_unscaled(&d)?;
    let x = artifact.transform(&d)?;
    let shap = tree_shap(ensemble, x.values(), &artifact.feature_names)?;
    let mut outputs = Vec::new();
    let summary = a.summary || a.dependency.is_none();
    if summary {
        let ranked = shap_summary(&shap)?;
        write_atomic(&a.out.join("shap_summary.csv"), summary_csv(&ranked).as_bytes())?;
        outputs.push("shap_summary.csv".to_string());
        let imp = gain_importance(ensemble, &artifact.feature_names)?;
        write_atomic(&a.out.join("gain_importance.csv"), imp.normalized().to_csv().as_bytes())?;
        outputs.push("gain_importance.csv".to_string());
        if a.svg {
            write_atomic(&a.out.join("shap_summary.svg"), summary_svg(&shap, &unscaled, a.top)?.as_bytes())?;
            outputs.push("shap_summary.svg".to_string());
        }
    }
    if let Some(feature) = &a.dependency {
        let table = dependency_data(&shap, &unscaled, feature, a.color.as_deref())?;
        let stem = format!("dependency_{}", file_safe(feature));
        write_atomic(&a.out.join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
        outputs.push(format!("{stem}.csv"));
        if a.svg {
            write_atomic(&a.out.join(format!("{stem}.svg")), dependency_svg(&table).as_bytes())?;
            outputs.push(format!("{stem}.svg"));
        }
    }
    let mut m = RunManifest::new("explain", artifact.seed, "none");
    m.notes.push(format!("artifact kind {}; attributions in raw output units", artifact.kind()));
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish(&a.out, m, &refs)
}

pub fn cmd_predict(artifact: &Path, data: &Path, aux: &[PathBuf], out: &Path) -> Result<()> {
    let a = ModelArtifact::load(artifact)?;
    let d = load_for_artifact(&a, data, aux)?;
    let probs = a.predict_proba(&d)?;
    let mut text = format!("{},probability\n", d.id_name());
    for (id, p) in d.row_ids().iter().zip(&probs) {
        text.push_str(&format!("{id},{p}\n"));
    }
    write_atomic(out, text.as_bytes())
}

/// Default spec for a kind tag, including the external placeholders.
pub fn parse_kind(s: &str) -> Result<ModelSpec> {
    serde_json::from_value(serde_json::json!({ "kind": s }))
        .map_err(|_| Error::Config(format!("unknown model kind `{s}`")))
}

//! Preprocessing plus model as one fit/apply unit.
//!
//! Fitting runs encode, impute, select, SMOTE, scale and the learner, in that
//! order, on training rows only. The fitted steps replay on any other dataset
//! with the same raw columns (SMOTE excepted: it only touches training data).

use serde::{Deserialize, Serialize};

use crate::dataset::{Aggregation, CategoricalEncoding, Dataset, EncodingMode};
use crate::error::{Error, Result};
use crate::models::{
    fit_adaboost, fit_forest, fit_gbdt, fit_gnb, fit_knn, fit_logistic, fit_tree, AdaBoostParams, ForestParams,
    GbdtParams, KnnParams, LogisticParams, Model, ModelKind, TreeParams,
};
use crate::preprocess::{
    apply_imputer, apply_scaler, fit_imputer, fit_scaler, select_features, smote, ImputerParams, ScalerParams,
    SelectionMethod, SmoteConfig,
};

/// Model choice and hyperparameters. The last four kinds are recognised so
/// reports can list them, but cannot be trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Gbdt(GbdtParams),
    Adaboost(AdaBoostParams),
    Knn(KnnParams),
    Gnb,
    Svm,
    Mlp,
    Catboost,
    Lightgbm,
}

impl ModelSpec {
    pub fn kind(&self) -> Option<ModelKind> {
        Some(match self {
            ModelSpec::Logistic(_) => ModelKind::Logistic,
            ModelSpec::Tree(_) => ModelKind::Tree,
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Gbdt(_) => ModelKind::Gbdt,
            ModelSpec::Adaboost(_) => ModelKind::Adaboost,
            ModelSpec::Knn(_) => ModelKind::Knn,
            ModelSpec::Gnb => ModelKind::Gnb,
            _ => return None,
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ModelSpec::Svm => "svm",
            ModelSpec::Mlp => "mlp",
            ModelSpec::Catboost => "catboost",
            ModelSpec::Lightgbm => "lightgbm",
            other => other.kind().map_or("", ModelKind::as_str),
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelSpec::Logistic(_) => "Logistic Regression",
            ModelSpec::Tree(_) => "Decision Tree",
            ModelSpec::Forest(_) => "Random Forest",
            ModelSpec::Gbdt(_) => "XGBoost",
            ModelSpec::Adaboost(_) => "AdaBoost",
            ModelSpec::Knn(_) => "KNN",
            ModelSpec::Gnb => "Naive Bayes",
            ModelSpec::Svm => "SVM",
            ModelSpec::Mlp => "MLP",
            ModelSpec::Catboost => "CatBoost",
            ModelSpec::Lightgbm => "LightGBM",
        }
    }

    /// Default spec for `kind`, using the benchmark-harness hyperparameters.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logistic => ModelSpec::Logistic(LogisticParams::default()),
            ModelKind::Tree => ModelSpec::Tree(TreeParams::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Gbdt => ModelSpec::Gbdt(GbdtParams::default()),
            ModelKind::Adaboost => ModelSpec::Adaboost(AdaBoostParams::default()),
            ModelKind::Knn => ModelSpec::Knn(KnnParams::default()),
            ModelKind::Gnb => ModelSpec::Gnb,
        }
    }

    pub fn hyperparameters(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// One auxiliary-table aggregation join, replayed at predict time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinSpec {
    /// Table name; used as the prefix of the generated columns.
    pub table: String,
    pub key: String,
    pub aggregations: Vec<(String, Aggregation)>,
}

fn default_encoding() -> EncodingMode {
    EncodingMode::OneHot
}

fn default_max_onehot() -> usize {
    32
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    /// Overrides the table label derived from the model kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_encoding")]
    pub encoding: EncodingMode,
    #[serde(default = "default_max_onehot")]
    pub max_onehot_cardinality: usize,
    #[serde(default = "yes")]
    pub impute: bool,
    #[serde(default)]
    pub missing_indicators: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionMethod>,
    /// SMOTE settings; the run seed replaces `smote.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smote: Option<SmoteConfig>,
    #[serde(default = "yes")]
    pub scale: bool,
    pub model: ModelSpec,
}

impl PipelineSpec {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            label: None,
            encoding: default_encoding(),
            max_onehot_cardinality: default_max_onehot(),
            impute: true,
            missing_indicators: false,
            selection: None,
            smote: None,
            scale: true,
            model,
        }
    }

    pub fn display_name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.model.display_name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteRecord {
    pub config: SmoteConfig,
    pub minority_class: u8,
    pub synthetic_count: usize,
    pub k_used: usize,
    pub warnings: Vec<String>,
}

/// Fitted preprocessing, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessing {
    /// Raw feature columns the pipeline was fitted on.
    pub input_names: Vec<String>,
    pub encoding: CategoricalEncoding,
    pub imputer: Option<ImputerParams>,
    pub selected: Option<Vec<String>>,
    pub smote: Option<SmoteRecord>,
    pub scaler: Option<ScalerParams>,
    pub steps: Vec<String>,
}

impl FittedPreprocessing {
    /// Apply every step up to, not including, scaling.
    pub fn transform_unscaled(&self, d: &Dataset) -> Result<Dataset> {
        if d.feature_names() != self.input_names.as_slice() {
            let want: std::collections::HashSet<&String> = self.input_names.iter().collect();
            let have: std::collections::HashSet<&String> = d.feature_names().iter().collect();
            if want != have {
                let missing: Vec<&&String> = want.difference(&have).collect();
                let extra: Vec<&&String> = have.difference(&want).collect();
                return Err(Error::Schema(format!(
                    "feature names differ from training: missing {missing:?}, unexpected {extra:?}"
                )));
            }
            return self.transform_unscaled(&d.select_columns(&self.input_names)?);
        }
        let mut out = self.encoding.apply(d)?;
        if let Some(imp) = &self.imputer {
            out = apply_imputer(&out, imp)?;
        }
        if let Some(sel) = &self.selected {
            out = out.select_columns(sel)?;
        }
        Ok(out)
    }

    /// Full apply-time transform: the model's input matrix.
    pub fn transform(&self, d: &Dataset) -> Result<Dataset> {
        let out = self.transform_unscaled(d)?;
        match &self.scaler {
            Some(s) => apply_scaler(&out, s),
            None => Ok(out),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub spec: PipelineSpec,
    pub seed: u64,
    pub preprocessing: FittedPreprocessing,
    pub model: Model,
    /// Names of the model's input columns.
    pub feature_names: Vec<String>,
    /// Rows the learner saw, after resampling.
    pub n_fit_rows: usize,
    /// Per-round training logloss, for boosted trees.
    pub train_logloss: Option<Vec<f64>>,
}

impl TrainedPipeline {
    pub fn predict_proba(&self, d: &Dataset) -> Result<Vec<f64>> {
        let x = self.preprocessing.transform(d)?;
        self.model.predict_proba(x.values())
    }
}

pub fn fit_model(spec: &ModelSpec, d: &Dataset, seed: u64) -> Result<(Model, Option<Vec<f64>>)> {
    Ok(match spec {
        ModelSpec::Logistic(p) => (Model::Logistic(fit_logistic(d, p)?), None),
        ModelSpec::Tree(p) => (Model::Tree(fit_tree(d, p)?), None),
        ModelSpec::Forest(p) => (Model::Forest(fit_forest(d, p, seed)?), None),
        ModelSpec::Gbdt(p) => {
            let fit = fit_gbdt(d, p, seed)?;
            (Model::Gbdt(fit.ensemble), Some(fit.train_logloss))
        }
        ModelSpec::Adaboost(p) => (Model::Adaboost(fit_adaboost(d, p)?), None),
        ModelSpec::Knn(p) => (Model::Knn(fit_knn(d, p)?), None),
        ModelSpec::Gnb => (Model::Gnb(fit_gnb(d)?), None),
        other => {
            return Err(Error::NotImplemented(format!("{}: external, not implemented", other.tag())));
        }
    })
}

/// Fit preprocessing and the model on `train`.
pub fn fit_pipeline(train: &Dataset, spec: &PipelineSpec, seed: u64) -> Result<TrainedPipeline> {
    if spec.model.kind().is_none() {
        return Err(Error::NotImplemented(format!("{}: external, not implemented", spec.model.tag())));
    }
    let mut steps = vec![format!("encode:{}", spec.encoding.as_str())];
    let encoding = CategoricalEncoding::fit(train, spec.encoding, spec.max_onehot_cardinality)?;
    let mut d = encoding.apply(train)?;
    let imputer = if spec.impute {
        let p = fit_imputer(&d, spec.missing_indicators)?;
        d = apply_imputer(&d, &p)?;
        steps.push("impute:median".into());
        Some(p)
    } else {
        None
    };
    let selected = match &spec.selection {
        Some(method) => {
            let names = select_features(&d, method)?;
            d = d.select_columns(&names)?;
            steps.push(format!("select:{}", method.name()));
            Some(names)
        }
        None => None,
    };
    let smote_record = match &spec.smote {
        Some(cfg) => {
            let cfg = SmoteConfig { seed, ..cfg.clone() };
            let out = smote(&d, &cfg)?;
            d = out.dataset;
            steps.push("smote".into());
            Some(SmoteRecord {
                config: cfg,
                minority_class: out.minority_class,
                synthetic_count: out.synthetic_count,
                k_used: out.k_used,
                warnings: out.warnings,
            })
        }
        None => None,
    };
    let scaler = if spec.scale {
        let s = fit_scaler(&d)?;
        d = apply_scaler(&d, &s)?;
        steps.push("scale:standard".into());
        Some(s)
    } else {
        None
    };
    steps.push(format!("fit:{}", spec.model.tag()));
    let (model, train_logloss) = fit_model(&spec.model, &d, seed)?;
    Ok(TrainedPipeline {
        spec: spec.clone(),
        seed,
        preprocessing: FittedPreprocessing {
            input_names: train.feature_names().to_vec(),
            encoding,
            imputer,
            selected,
            smote: smote_record,
            scaler,
            steps,
        },
        model,
        feature_names: d.feature_names().to_vec(),
        n_fit_rows: d.n_rows(),
        train_logloss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SchemaConfig;

    fn sample() -> Dataset {
        let mut text = String::from("SK_ID_CURR,TARGET,CODE_GENDER,AMT_CREDIT,EXT\n");
        for i in 0..60 {
            let g = if i % 3 == 0 { "F" } else { "M" };
            let amt = if i % 7 == 0 { String::new() } else { format!("{}", 1000 + i * 37) };
            let t = u8::from(i % 4 == 0 || i > 50);
            text.push_str(&format!("{i},{t},{g},{amt},{}\n", (i * 13) % 59));
        }
        crate::dataset::load_csv_reader(text.as_bytes(), &SchemaConfig::default()).unwrap()
    }

    #[test]
    fn spec_json_shape() {
        let spec: PipelineSpec =
            serde_json::from_str(r#"{"model": {"kind": "forest", "n_trees": 5}, "smote": {"k_neighbors": 3}}"#).unwrap();
        match &spec.model {
            ModelSpec::Forest(p) => {
                assert_eq!(p.n_trees, 5);
                assert_eq!(p.max_depth, 8);
            }
            other => panic!("{other:?}"),
        }
        assert!(spec.impute && spec.scale);
        assert_eq!(spec.display_name(), "Random Forest");
        let gnb: ModelSpec = serde_json::from_str(r#"{"kind": "gnb"}"#).unwrap();
        assert_eq!(gnb, ModelSpec::Gnb);
    }

    #[test]
    fn fit_and_replay() {
        let d = sample();
        let mut spec = PipelineSpec::new(ModelSpec::Gbdt(GbdtParams { n_rounds: 5, ..GbdtParams::default() }));
        spec.smote = Some(SmoteConfig::default());
        let t = fit_pipeline(&d, &spec, 7).unwrap();
        assert_eq!(t.feature_names, vec!["CODE_GENDER_F", "CODE_GENDER_M", "AMT_CREDIT", "EXT"]);
        assert!(t.n_fit_rows > d.n_rows());
        let p = t.predict_proba(&d).unwrap();
        assert_eq!(p.len(), d.n_rows());
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let steps: Vec<&str> = t.preprocessing.steps.iter().map(String::as_str).collect();
        assert_eq!(steps, ["encode:one-hot", "impute:median", "smote", "scale:standard", "fit:gbdt"]);
    }

    #[test]
    fn external_kind_is_not_implemented() {
        let d = sample();
        let err = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::Svm), 0).unwrap_err();
        assert_eq!(err.class(), "not-implemented");
    }

    #[test]
    fn column_mismatch_is_schema_error() {
        let d = sample();
        let t = fit_pipeline(&d, &PipelineSpec::new(ModelSpec::Gnb), 0).unwrap();
        let other = d.select_columns(&["AMT_CREDIT".to_string(), "EXT".to_string()]).unwrap();
        assert!(matches!(t.predict_proba(&other), Err(Error::Schema(_))));
    }
}

use std::path::{Path, PathBuf};

use credit_core::dataset::{Aggregation, EncodingMode, SchemaConfig};
use credit_core::pipeline::{ModelSpec, PipelineSpec};
use credit_core::preprocess::{SelectionMethod, SmoteConfig};
use credit_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DEPTHS: [usize; 5] = [3, 4, 5, 6, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    pub path: PathBuf,
    #[serde(default = "default_key")]
    pub key: String,
    pub aggregations: Vec<(String, Aggregation)>,
}

fn default_key() -> String {
    "SK_ID_CURR".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub aux: Vec<AuxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessingConfig {
    #[serde(default = "default_encoding")]
    pub encoding: EncodingMode,
    #[serde(default = "default_max_onehot")]
    pub max_onehot_cardinality: usize,
    #[serde(default = "yes")]
    pub impute: bool,
    #[serde(default)]
    pub missing_indicators: bool,
    #[serde(default)]
    pub selection: Option<SelectionMethod>,
    #[serde(default)]
    pub smote: Option<SmoteConfig>,
    #[serde(default = "yes")]
    pub scale: bool,
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

impl Default for PreprocessingConfig {
    fn default() -> Self {
        Self {
            encoding: default_encoding(),
            max_onehot_cardinality: default_max_onehot(),
            impute: true,
            missing_indicators: false,
            selection: None,
            smote: None,
            scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitConfig {
    Holdout {
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default = "yes")]
        stratified: bool,
    },
    Kfold {
        k: usize,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::Holdout { test_fraction: default_test_fraction(), stratified: true }
    }
}

impl SplitConfig {
    pub fn describe(&self, seed: u64) -> String {
        match self {
            SplitConfig::Holdout { test_fraction, stratified } => format!(
                "holdout test_fraction={test_fraction} {} seed={seed}",
                if *stratified { "stratified" } else { "random" }
            ),
            SplitConfig::Kfold { k } => format!("stratified {k}-fold seed={seed}"),
        }
    }
}

/// One run's inputs. Relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub schema: SchemaConfig,
    #[serde(default)]
    pub preprocessing: PreprocessingConfig,
    /// Train and sweep use the first spec; compare uses all of them. Empty
    /// means gbdt for train and sweep, every implemented kind for compare.
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_depths() -> Vec<usize> {
    DEFAULT_DEPTHS.to_vec()
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(train: impl Into<PathBuf>) -> Self {
        Self {
            data: DataConfig { train: train.into(), aux: Vec::new() },
            schema: SchemaConfig::default(),
            preprocessing: PreprocessingConfig::default(),
            models: Vec::new(),
            depths: default_depths(),
            split: SplitConfig::default(),
            seed: DEFAULT_SEED,
            output_dir: default_output(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.train);
        self.data.aux.iter_mut().for_each(|a| fix(&mut a.path));
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        match self.split {
            SplitConfig::Holdout { test_fraction, .. } if !(test_fraction > 0.0 && test_fraction < 1.0) => {
                Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")))
            }
            SplitConfig::Kfold { k } if k < 2 => Err(Error::Config(format!("k-fold needs k >= 2, got {k}"))),
            _ => Ok(()),
        }
    }

    pub fn pipeline(&self, model: ModelSpec) -> PipelineSpec {
        let p = &self.preprocessing;
        PipelineSpec {
            encoding: p.encoding,
            max_onehot_cardinality: p.max_onehot_cardinality,
            impute: p.impute,
            missing_indicators: p.missing_indicators,
            selection: p.selection.clone(),
            smote: p.smote.clone(),
            scale: p.scale,
            ..PipelineSpec::new(model)
        }
    }

    pub fn first_model(&self) -> ModelSpec {
        self.models.first().cloned().unwrap_or_else(|| ModelSpec::default_for(credit_core::ModelKind::Gbdt))
    }

    pub fn comparison_models(&self) -> Vec<ModelSpec> {
        if self.models.is_empty() {
            credit_core::ModelKind::ALL.iter().map(|&k| ModelSpec::default_for(k)).collect()
        } else {
            self.models.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"data": {"train": "a.csv"}}"#).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.split, SplitConfig::default());
        assert_eq!(cfg.depths, vec![3, 4, 5, 6, 7]);
        assert_eq!(cfg.comparison_models().len(), 7);
    }

    #[test]
    fn two_split_specs_are_rejected() {
        let text = r#"{"data": {"train": "a.csv"}, "split": {"kfold": {"k": 5}, "holdout": {}}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn misspelled_nested_keys_are_rejected() {
        for text in [
            r#"{"data": {"train": "a.csv"}, "models": [{"kind": "gbdt", "rounds": 10}]}"#,
            r#"{"data": {"train": "a.csv"}, "preprocessing": {"smote": {"k": 3}}}"#,
            r#"{"data": {"train": "a.csv"}, "preprocessing": {"selection": {"method": "information-gain", "top_m": 3, "m": 1}}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
        let ok = r#"{"data": {"train": "a.csv"}, "models": [{"kind": "gbdt", "n_rounds": 10}, {"kind": "gnb"}]}"#;
        assert_eq!(serde_json::from_str::<RunConfig>(ok).unwrap().models.len(), 2);
    }

    #[test]
    fn bad_fraction_is_config_error() {
        let mut cfg = RunConfig::new("a.csv");
        cfg.split = SplitConfig::Holdout { test_fraction: 1.5, stratified: true };
        assert_eq!(cfg.validate().unwrap_err().class(), "config");
    }
}

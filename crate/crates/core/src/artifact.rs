//! Self-contained model files: payload plus everything needed to replay
//! preprocessing on raw rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SchemaConfig};
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};
use crate::pipeline::{FittedPreprocessing, JoinSpec, TrainedPipeline};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Schema the training file was read with, categoricals frozen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaConfig>,
    #[serde(default)]
    pub joins: Vec<JoinSpec>,
    #[serde(flatten)]
    pub pipeline: FittedPreprocessing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub schema_version: u32,
    /// Model input columns, after encoding and selection.
    pub feature_names: Vec<String>,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub preprocessing: Provenance,
    pub model: Model,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    schema_version: u32,
    kind: String,
    feature_names: Vec<String>,
    hyperparameters: serde_json::Value,
    seed: u64,
    preprocessing: Provenance,
    payload: serde_json::Value,
}

impl ModelArtifact {
    pub fn from_trained(t: &TrainedPipeline, schema: Option<SchemaConfig>, joins: Vec<JoinSpec>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            feature_names: t.feature_names.clone(),
            hyperparameters: t.spec.model.hyperparameters(),
            seed: t.seed,
            preprocessing: Provenance { schema, joins, pipeline: t.preprocessing.clone() },
            model: t.model.clone(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = Wire {
            schema_version: self.schema_version,
            kind: self.kind().as_str().to_string(),
            feature_names: self.feature_names.clone(),
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
            preprocessing: self.preprocessing.clone(),
            payload: self.model.payload_json()?,
        };
        let mut s = serde_json::to_string_pretty(&wire)
            .map_err(|e| Error::Persistence(format!("cannot encode artifact: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Persistence(format!("unreadable artifact: {e}")))?;
        let version = raw.get("schema_version").and_then(serde_json::Value::as_u64);
        if version != Some(SCHEMA_VERSION as u64) {
            let found = version.map_or_else(|| "none".to_string(), |v| v.to_string());
            return Err(Error::Persistence(format!(
                "artifact schema version {found} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
        let wire: Wire =
            serde_json::from_value(raw).map_err(|e| Error::Persistence(format!("malformed artifact: {e}")))?;
        let kind: ModelKind = wire
            .kind
            .parse()
            .map_err(|_| Error::Persistence(format!("unknown-kind: {:?}", wire.kind)))?;
        let model = Model::from_payload_json(kind, wire.payload)?;
        if model.n_features() != wire.feature_names.len() {
            return Err(Error::Persistence(format!(
                "payload has {} features but {} feature names",
                model.n_features(),
                wire.feature_names.len()
            )));
        }
        Ok(Self {
            schema_version: wire.schema_version,
            feature_names: wire.feature_names,
            hyperparameters: wire.hyperparameters,
            seed: wire.seed,
            preprocessing: wire.preprocessing,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Raw rows in, probabilities out. `d` must carry the training columns.
    pub fn predict_proba(&self, d: &Dataset) -> Result<Vec<f64>> {
        let x = self.transform(d)?;
        self.model.predict_proba(x.values())
    }

    /// The model input matrix for `d`.
    pub fn transform(&self, d: &Dataset) -> Result<Dataset> {
        let x = self.preprocessing.pipeline.transform(d)?;
        if x.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Schema("transformed columns do not match the artifact's feature names".into()));
        }
        Ok(x)
    }
}

//! The seven learners behind one probability-predicting contract.

mod adaboost;
mod forest;
mod gbdt;
mod gnb;
mod knn;
mod logistic;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adaboost::{alpha_for_error, fit_adaboost, AdaBoostModel, AdaBoostParams, RoundRecord};
pub use forest::{fit_forest, fit_tree, ForestParams, MaxFeatures, TreeParams};
pub use gbdt::{fit_gbdt, logloss, GbdtFit, GbdtParams};
pub use gnb::{fit_gnb, GnbModel};
pub use knn::{fit_knn, KnnModel, KnnParams};
pub use logistic::{fit_logistic, lipschitz_bound, objective_and_gradient, LogisticModel, LogisticParams};
pub use tree::{
    entropy, gini, leaf_index, predict_tree, sigmoid, validate_tree, ClassWeight, Criterion, EnsembleMode,
    TreeEnsemble, TreeNode,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Tree,
    Forest,
    Gbdt,
    Adaboost,
    Knn,
    Gnb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Logistic,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::Gbdt,
        ModelKind::Adaboost,
        ModelKind::Knn,
        ModelKind::Gnb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Adaboost => "adaboost",
            ModelKind::Knn => "knn",
            ModelKind::Gnb => "gnb",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(self, ModelKind::Tree | ModelKind::Forest | ModelKind::Gbdt | ModelKind::Adaboost)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Tree(TreeEnsemble),
    Forest(TreeEnsemble),
    Gbdt(TreeEnsemble),
    Adaboost(AdaBoostModel),
    Knn(KnnModel),
    Gnb(GnbModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Tree(_) => ModelKind::Tree,
            Model::Forest(_) => ModelKind::Forest,
            Model::Gbdt(_) => ModelKind::Gbdt,
            Model::Adaboost(_) => ModelKind::Adaboost,
            Model::Knn(_) => ModelKind::Knn,
            Model::Gnb(_) => ModelKind::Gnb,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.weights.len(),
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => e.n_features,
            Model::Adaboost(m) => m.ensemble.n_features,
            Model::Knn(m) => m.train.n_cols(),
            Model::Gnb(m) => m.means[0].len(),
        }
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Result<Vec<f64>> {
        if rows.n_cols() != self.n_features() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.n_features(),
                rows.n_cols()
            )));
        }
        Ok(match self {
            Model::Logistic(m) => m.predict_proba(rows),
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => e.predict_proba(rows),
            Model::Adaboost(m) => m.predict_proba(rows),
            Model::Knn(m) => m.predict_proba(rows),
            Model::Gnb(m) => m.predict_proba(rows),
        })
    }

    /// The tree ensemble behind a tree-based model.
    pub fn tree_ensemble(&self) -> Option<&TreeEnsemble> {
        match self {
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => Some(e),
            Model::Adaboost(m) => Some(&m.ensemble),
            _ => None,
        }
    }

    pub fn payload_json(&self) -> Result<serde_json::Value> {
        let v = match self {
            Model::Logistic(m) => serde_json::to_value(m),
            Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => serde_json::to_value(e),
            Model::Adaboost(m) => serde_json::to_value(m),
            Model::Knn(m) => serde_json::to_value(m),
            Model::Gnb(m) => serde_json::to_value(m),
        };
        v.map_err(|e| Error::Persistence(format!("cannot encode model payload: {e}")))
    }

    pub fn from_payload_json(kind: ModelKind, payload: serde_json::Value) -> Result<Self> {
        fn de<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::Persistence(format!("malformed model payload: {e}")))
        }
        let m = match kind {
            ModelKind::Logistic => Model::Logistic(de(payload)?),
            ModelKind::Tree => Model::Tree(de(payload)?),
            ModelKind::Forest => Model::Forest(de(payload)?),
            ModelKind::Gbdt => Model::Gbdt(de(payload)?),
            ModelKind::Adaboost => Model::Adaboost(de(payload)?),
            ModelKind::Knn => Model::Knn(de(payload)?),
            ModelKind::Gnb => Model::Gnb(de(payload)?),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if let Some(e) = self.tree_ensemble() {
            e.validate()?;
        }
        match self {
            Model::Knn(m) if m.k == 0 || m.k > m.labels.len() || m.labels.len() != m.train.n_rows() => {
                Err(Error::Persistence("inconsistent knn payload".into()))
            }
            Model::Gnb(m)
                if m.means.iter().chain(&m.variances).any(|v| v.len() != m.means[0].len())
                    || m.variances.iter().flatten().any(|&v| !(v > 0.0)) =>
            {
                Err(Error::Persistence("inconsistent naive Bayes payload".into()))
            }
            _ => Ok(()),
        }
    }
}

//! Tabular credit-default modeling.
//!
//! The crate covers the full workflow used for default prediction on
//! Home-Credit-shaped data: CSV ingestion with categorical encoding and
//! auxiliary-table aggregation, fit/apply preprocessing (median imputation,
//! standardization, SMOTE, feature selection), seven probability-predicting
//! learners, a metric and benchmark harness, and exact TreeSHAP attributions
//! for the tree ensembles.
//!
//! All randomness is derived from a run seed through [`rng::stream`], so every
//! result is reproducible and independent of the rayon thread count.

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use artifact::ModelArtifact;
pub use dataset::{ColumnKind, Dataset, SchemaConfig, SplitPlan};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use models::{ModelKind, TreeEnsemble, TreeNode};
pub use pipeline::{ModelSpec, PipelineSpec};

//! Fit-on-train, apply-anywhere preprocessing: median imputation,
//! standardization, SMOTE oversampling and feature selection.

mod impute;
mod scale;
mod select;
mod smote;

pub use impute::{apply_imputer, fit_imputer, ImputerParams};
pub use scale::{apply_scaler, fit_scaler, ScalerParams};
pub use select::{
    correlation_filter, information_gain, information_gain_scores, pearson, select_features, SelectionMethod,
};
pub use smote::{smote, SmoteConfig, SmoteOutcome};

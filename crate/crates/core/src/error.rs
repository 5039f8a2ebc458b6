use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("imputer error: column `{column}` has no non-missing training values")]
    Imputer { column: String },

    #[error("preprocess error: {0}")]
    Preprocess(String),

    #[error("resample error: {0}")]
    Resample(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("explain error: {0}")]
    Explain(String),

    #[error("unsupported explainer: {0}")]
    UnsupportedExplainer(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable class name used by the CLI diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Split(_) => "split",
            Error::Imputer { .. } => "imputer",
            Error::Preprocess(_) => "preprocess",
            Error::Resample(_) => "resample",
            Error::Training(_) => "training",
            Error::Evaluation(_) => "evaluation",
            Error::Explain(_) => "explain",
            Error::UnsupportedExplainer(_) => "unsupported-explainer",
            Error::NotImplemented(_) => "not-implemented",
            Error::Persistence(_) => "persistence",
            Error::Fold { source, .. } => source.class(),
        }
    }
}

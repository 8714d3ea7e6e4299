//! Scoring, cross-validated tuning, residual analysis, reports and model
//! artifacts.

pub mod artifact;
pub mod metrics;
pub mod report;
pub mod residuals;
pub mod search;

use thiserror::Error;

pub use artifact::{
    data_fingerprint, train_model, write_atomic, ModelArtifact, ModelKind, ModelParams, ModelPayload, ARTIFACT_FORMAT_VERSION,
};
pub use metrics::{compute_metrics, inverse_transform, MetricSet};
pub use report::{emit_report, evaluate_artifacts, render_report, EvalReport, ModelEvaluation};
pub use residuals::{residual_analysis, ResidualBin};
pub use search::{
    fit_predict, gbt_default_grid, grid_search, kfold_indices, rf_default_grid, CvPlan, Grid, GridResult, ParamValue,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {truth} true values, {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("bad parameter {name}: {message}")]
    BadParam { name: String, message: String },
    #[error("empty grid")]
    EmptyGrid,
    #[error("model error: {0}")]
    Model(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

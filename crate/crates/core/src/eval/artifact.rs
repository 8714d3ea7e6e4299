use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{compute_metrics, inverse_transform, MetricSet};
use super::EvalError;
use crate::features::{Dataset, FeatureSpec, Standardizer};
use crate::forest::{fit_forest, predict_forest, ForestModel, ForestParams};
use crate::gbt::{fit_gbt, predict_gbt, GbtModel, GbtParams};
use crate::lstm::{fit_lstm, predict_lstm, LstmParams, LstmShape, LstmWeights, NamedTensor, TrainingCurve};
use crate::matrix::Matrix;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Share of the (date-ordered) training rows held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Gbt,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rf, ModelKind::Gbt, ModelKind::Lstm];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "forest" => Ok(ModelKind::Rf),
            "gbt" | "xgboost" => Ok(ModelKind::Gbt),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(format!("unknown model {other:?} (expected rf, gbt or lstm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum ModelParams {
    Rf(ForestParams),
    Gbt(GbtParams),
    Lstm(LstmParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Rf(_) => ModelKind::Rf,
            ModelParams::Gbt(_) => ModelKind::Gbt,
            ModelParams::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelParams::Rf(p) => ModelParams::Rf(ForestParams { seed, ..*p }),
            ModelParams::Gbt(p) => ModelParams::Gbt(GbtParams { seed, ..*p }),
            ModelParams::Lstm(p) => ModelParams::Lstm(LstmParams { seed, ..p.clone() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelPayload {
    Rf { model: ForestModel },
    Gbt { model: GbtModel },
    Lstm { shape: LstmShape, tensors: Vec<NamedTensor>, standardizer: Standardizer, curve: TrainingCurve },
}

/// A trained model with everything needed to reproduce its predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub kind: ModelKind,
    pub params: ModelParams,
    pub master_seed: u64,
    /// SHA-256 over the training rows and targets.
    pub data_fingerprint: String,
    pub feature_spec: FeatureSpec,
    pub payload: ModelPayload,
    pub test_rows: Vec<usize>,
    /// Log-space predictions for `test_rows`.
    pub test_predictions: Vec<f64>,
    pub metrics: Option<MetricSet>,
}

pub fn data_fingerprint(x: &Matrix, y: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((x.n_rows() as u64).to_le_bytes());
    h.update((x.n_cols() as u64).to_le_bytes());
    for v in x.as_slice().iter().chain(y) {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn model_err(e: impl fmt::Display) -> EvalError {
    EvalError::Model(e.to_string())
}

/// Fit on the training split and score the test split.
pub fn train_model(params: &ModelParams, dataset: &Dataset, master_seed: u64) -> Result<ModelArtifact, EvalError> {
    let train = dataset.train_indices();
    let test = dataset.test_indices();
    let (x_train, y_train) = dataset.subset(&train);
    let payload = match params {
        ModelParams::Rf(p) => ModelPayload::Rf { model: fit_forest(&x_train, &y_train, p).map_err(model_err)? },
        ModelParams::Gbt(p) => {
            let model = if p.early_stopping_rounds.is_some() {
                let (fit, hold) = dataset.temporal_holdout(&train, VALIDATION_FRACTION);
                let (fx, fy) = dataset.subset(&fit);
                let (hx, hy) = dataset.subset(&hold);
                fit_gbt(&fx, &fy, p, Some((&hx, &hy)))
            } else {
                fit_gbt(&x_train, &y_train, p, None)
            }
            .map_err(model_err)?;
            ModelPayload::Gbt { model }
        }
        ModelParams::Lstm(p) => {
            let spec = &dataset.spec;
            let standardizer = Standardizer::fit_rows(&dataset.features, &train, spec.n_numeric()).map_err(model_err)?;
            let (fit, hold) = dataset.temporal_holdout(&train, VALIDATION_FRACTION);
            let (fx, fy) = dataset.subset(&fit);
            let (hx, hy) = dataset.subset(&hold);
            let (fx, hx) = (standardizer.apply(&fx), standardizer.apply(&hx));
            let fitted = fit_lstm(&fx, &fy, spec.n_numeric(), &spec.cardinalities(), p, Some((&hx, &hy))).map_err(model_err)?;
            ModelPayload::Lstm {
                shape: fitted.weights.shape.clone(),
                tensors: fitted.weights.named_tensors(),
                standardizer,
                curve: fitted.curve,
            }
        }
    };
    let mut artifact = ModelArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        kind: params.kind(),
        params: params.clone(),
        master_seed,
        data_fingerprint: data_fingerprint(&x_train, &y_train),
        feature_spec: dataset.spec.clone(),
        payload,
        test_rows: test.clone(),
        test_predictions: Vec::new(),
        metrics: None,
    };
    let (x_test, _) = dataset.subset(&test);
    artifact.test_predictions = artifact.predict_log(&x_test)?;
    if test.len() >= 2 {
        let truth: Vec<f64> = test.iter().map(|&i| dataset.target_days[i]).collect();
        let pred: Vec<f64> = artifact.test_predictions.iter().map(|&p| inverse_transform(p)).collect();
        artifact.metrics = Some(compute_metrics(&truth, &pred)?);
    }
    Ok(artifact)
}

impl ModelArtifact {
    /// Log-space predictions for unstandardized feature rows.
    pub fn predict_log(&self, x: &Matrix) -> Result<Vec<f64>, EvalError> {
        match &self.payload {
            ModelPayload::Rf { model } => predict_forest(model, x).map_err(model_err),
            ModelPayload::Gbt { model } => predict_gbt(model, x).map_err(model_err),
            ModelPayload::Lstm { shape, tensors, standardizer, .. } => {
                let weights = LstmWeights::from_named_tensors(shape.clone(), tensors).map_err(model_err)?;
                predict_lstm(&weights, &standardizer.apply(x)).map_err(model_err)
            }
        }
    }

    pub fn predict_days(&self, x: &Matrix) -> Result<Vec<f64>, EvalError> {
        Ok(self.predict_log(x)?.into_iter().map(inverse_transform).collect())
    }

    /// Impurity (rf) or gain (gbt) importances; none for the LSTM.
    pub fn importances(&self) -> Option<&[f64]> {
        match &self.payload {
            ModelPayload::Rf { model } => Some(&model.importances),
            ModelPayload::Gbt { model } => Some(&model.importances),
            ModelPayload::Lstm { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| EvalError::Artifact(e.to_string()))?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == ARTIFACT_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(EvalError::Artifact(format!("unsupported format version {v}"))),
            None => return Err(EvalError::Artifact("missing format_version".into())),
        }
        serde_json::from_value(probe).map_err(|e| EvalError::Artifact(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.partial"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

//! Newton-boosted regression trees on the squared-error objective.
//!
//! Each round fits a tree to gradients `g = pred - y` and unit hessians with
//! the second-order gain, using a fresh row subsample (without replacement)
//! and a per-tree column subsample. Predictions are
//! `base_score + sum_k learning_rate * tree_k(x)`, accumulated in round order.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{fit_tree, CartError, FeatureSubsample, RegressionTree, SplitCriterion, Targets, TreeParams};
use crate::forest::normalize;
use crate::matrix::Matrix;
use crate::rng::stream_rng;

/// Patience used when early stopping is switched on without a value.
pub const DEFAULT_EARLY_STOPPING_ROUNDS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum GbtError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("early stopping requires validation rows")]
    MissingValidation,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Width(#[from] CartError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// `None` grows without a depth limit.
    #[serde(deserialize_with = "crate::cart::deserialize_depth")]
    pub max_depth: Option<usize>,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub early_stopping_rounds: Option<usize>,
    pub seed: u64,
}

impl Default for GbtParams {
    /// The tuned configuration reported for the FRAP data.
    fn default() -> Self {
        Self {
            n_estimators: 500,
            learning_rate: 0.01,
            max_depth: Some(4),
            subsample: 0.6,
            colsample_bytree: 0.8,
            gamma: 0.4,
            lambda: 1.0,
            early_stopping_rounds: None,
            seed: 42,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<(), GbtError> {
        let bad = |m: &str| Err(GbtError::InvalidParam(m.to_string()));
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.lambda >= 0.0) {
            return bad("gamma and lambda must be nonnegative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub column_masks: Vec<Vec<usize>>,
    pub importances: Vec<f64>,
    /// Validation RMSE after 0, 1, 2, ... rounds when validation was given.
    pub validation_curve: Vec<f64>,
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

pub fn fit_gbt(
    x: &Matrix,
    y: &[f64],
    params: &GbtParams,
    validation: Option<(&Matrix, &[f64])>,
) -> Result<GbtModel, GbtError> {
    let n = x.n_rows();
    if n == 0 || y.is_empty() {
        return Err(GbtError::EmptyDataset);
    }
    params.validate()?;
    let validation = validation.filter(|(vx, _)| vx.n_rows() > 0);
    if params.early_stopping_rounds.is_some() && validation.is_none() {
        return Err(GbtError::MissingValidation);
    }
    let d = x.n_cols();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let criterion = SplitCriterion::Newton { lambda: params.lambda, gamma: params.gamma };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: FeatureSubsample::All,
    };
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((params.colsample_bytree * d as f64).round() as usize).clamp(1, d.max(1));

    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let hess = vec![1.0; n];
    let mut val_pred = validation.map(|(vx, _)| vec![base_score; vx.n_rows()]);
    let mut curve = Vec::new();
    if let (Some((_, vy)), Some(vp)) = (validation, &val_pred) {
        curve.push(rmse(vp, vy));
    }
    let mut best_round = 0;
    let mut trees = Vec::new();
    let mut masks = Vec::new();
    let mut rng = stream_rng(params.seed, 0);

    for _round in 0..params.n_estimators {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let rows: Vec<usize> = if n_rows < n {
            let mut r = index::sample(&mut rng, n, n_rows).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let cols: Vec<usize> = if n_cols < d {
            let mut c = index::sample(&mut rng, d, n_cols).into_vec();
            c.sort_unstable();
            c
        } else {
            (0..d).collect()
        };
        let tree = fit_tree(x, &rows, Targets::GradHess { grad: &grad, hess: &hess }, &cols, &tree_params, criterion, &mut rng);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_unchecked(x.row(i));
        }
        if let (Some((vx, vy)), Some(vp)) = (validation, val_pred.as_mut()) {
            for (i, p) in vp.iter_mut().enumerate() {
                *p += params.learning_rate * tree.predict_unchecked(vx.row(i));
            }
            let score = rmse(vp, vy);
            curve.push(score);
            if score < curve[best_round] {
                best_round = curve.len() - 1;
            }
        }
        trees.push(tree);
        masks.push(cols);
        if let Some(patience) = params.early_stopping_rounds {
            if curve.len() - 1 - best_round >= patience {
                break;
            }
        }
    }
    if params.early_stopping_rounds.is_some() {
        trees.truncate(best_round);
        masks.truncate(best_round);
    }

    let mut model = GbtModel {
        params: *params,
        n_features: d,
        base_score,
        learning_rate: params.learning_rate,
        trees,
        column_masks: masks,
        importances: Vec::new(),
        validation_curve: curve,
    };
    model.importances = gain_importance(&model);
    Ok(model)
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, GbtError> {
        if row.len() != self.n_features {
            return Err(CartError::WidthMismatch { expected: self.n_features, got: row.len() }.into());
        }
        let mut p = self.base_score;
        for t in &self.trees {
            p += self.learning_rate * t.predict_unchecked(row);
        }
        Ok(p)
    }
}

pub fn predict_gbt(model: &GbtModel, x: &Matrix) -> Result<Vec<f64>, GbtError> {
    if x.n_cols() != model.n_features {
        return Err(CartError::WidthMismatch { expected: model.n_features, got: x.n_cols() }.into());
    }
    x.rows().map(|r| model.predict_row(r)).collect()
}

/// Total split gain per feature over the kept trees, normalized to one.
pub fn gain_importance(model: &GbtModel) -> Vec<f64> {
    let mut acc = vec![0.0; model.n_features];
    for t in &model.trees {
        for (a, g) in acc.iter_mut().zip(t.gain_by_feature()) {
            *a += g;
        }
    }
    normalize(acc)
}

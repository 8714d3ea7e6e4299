//! Bagged random-forest regressor.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{fit_tree, CartError, FeatureSubsample, RegressionTree, SplitCriterion, Targets, TreeParams};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("n_estimators must be at least 1")]
    NoTrees,
    #[error(transparent)]
    Width(#[from] CartError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    #[serde(deserialize_with = "crate::cart::deserialize_depth")]
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    /// The tuned configuration reported for the FRAP data.
    fn default() -> Self {
        Self {
            n_estimators: 350,
            max_depth: Some(10),
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<RegressionTree>,
    pub importances: Vec<f64>,
}

/// Tree `t` is grown from its own stream seeded by `hash(seed, t)`, so
/// results do not depend on how trees are scheduled across threads.
pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<ForestModel, ForestError> {
    if x.n_rows() == 0 || y.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    if params.n_estimators == 0 {
        return Err(ForestError::NoTrees);
    }
    let n = x.n_rows();
    let features: Vec<usize> = (0..x.n_cols()).collect();
    let tree_params = params.tree_params();
    let tree_seeds: Vec<u64> = (0..params.n_estimators as u64).map(|t| derive_seed(params.seed, t)).collect();
    let trees: Vec<RegressionTree> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, t as u64);
            let rows: Vec<usize> =
                if params.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
            fit_tree(x, &rows, Targets::Values(y), &features, &tree_params, SplitCriterion::Variance, &mut rng)
        })
        .collect();
    let importances = impurity_importance_of(&trees, x.n_cols());
    Ok(ForestModel { params: *params, tree_seeds, trees, importances })
}

fn impurity_importance_of(trees: &[RegressionTree], n_features: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_features];
    for t in trees {
        for (a, v) in acc.iter_mut().zip(t.weighted_gain_by_feature()) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= trees.len().max(1) as f64;
    }
    normalize(acc)
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for a in &mut v {
            *a /= total;
        }
    }
    v
}

/// Per-feature weighted variance reduction averaged over trees, normalized
/// to sum to one (all zeros when no tree ever split).
pub fn impurity_importance(model: &ForestModel) -> Vec<f64> {
    let n = model.trees.first().map_or(0, |t| t.n_features);
    impurity_importance_of(&model.trees, n)
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ForestError> {
        let mut sum = 0.0;
        for t in &self.trees {
            sum += t.predict(row)?;
        }
        Ok(sum / self.trees.len() as f64)
    }
}

/// Mean of per-tree predictions, in log-days space.
pub fn predict_forest(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>, ForestError> {
    if x.n_cols() != model.n_features() {
        return Err(CartError::WidthMismatch { expected: model.n_features(), got: x.n_cols() }.into());
    }
    (0..x.n_rows()).into_par_iter().map(|i| model.predict_row(x.row(i))).collect()
}

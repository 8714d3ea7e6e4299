use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::ModelParams;
use super::EvalError;
use crate::cart::FeatureSubsample;
use crate::forest::{fit_forest, predict_forest, ForestParams};
use crate::gbt::{fit_gbt, predict_gbt, GbtParams};
use crate::matrix::Matrix;
use crate::rng::stream_rng;

pub const DEFAULT_FOLDS: usize = 5;

/// Fold membership as positions into the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl CvPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Positions outside fold `f`.
    pub fn training_positions(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        out.sort_unstable();
        out
    }
}

/// Seeded shuffle, then contiguous chunks; the first `n % k` folds get one
/// extra row.
pub fn kfold_indices(n_rows: usize, k: usize, seed: u64) -> Result<CvPlan, EvalError> {
    if k == 0 || n_rows < k {
        return Err(EvalError::TooFewRows { needed: k.max(1), got: n_rows });
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut stream_rng(seed, 0));
    let (base, extra) = (n_rows / k, n_rows % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(CvPlan { seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Text(v) => write!(f, "{v}"),
        }
    }
}

impl ParamValue {
    fn bad(name: &str, v: &ParamValue, what: &str) -> EvalError {
        EvalError::BadParam { name: name.to_string(), message: format!("expected {what}, got {v}") }
    }

    fn as_usize(&self, name: &str) -> Result<usize, EvalError> {
        match self {
            ParamValue::Int(v) if *v >= 0 => Ok(*v as usize),
            _ => Err(Self::bad(name, self, "a nonnegative integer")),
        }
    }

    fn as_f64(&self, name: &str) -> Result<f64, EvalError> {
        match self {
            ParamValue::Int(v) => Ok(*v as f64),
            ParamValue::Float(v) => Ok(*v),
            _ => Err(Self::bad(name, self, "a number")),
        }
    }

    fn as_depth(&self, name: &str) -> Result<Option<usize>, EvalError> {
        match self {
            ParamValue::Text(t) if t.eq_ignore_ascii_case("none") => Ok(None),
            _ => self.as_usize(name).map(Some).map_err(|_| Self::bad(name, self, "an integer or \"none\"")),
        }
    }

    fn as_max_features(&self, name: &str) -> Result<FeatureSubsample, EvalError> {
        match self {
            ParamValue::Text(t) => match t.to_ascii_lowercase().as_str() {
                "sqrt" => Ok(FeatureSubsample::Sqrt),
                "log2" => Ok(FeatureSubsample::Log2),
                "none" | "all" => Ok(FeatureSubsample::All),
                _ => Err(Self::bad(name, self, "sqrt, log2, none or a fraction")),
            },
            ParamValue::Float(v) if *v > 0.0 && *v <= 1.0 => Ok(FeatureSubsample::Fraction(*v)),
            _ => Err(Self::bad(name, self, "sqrt, log2, none or a fraction")),
        }
    }
}

/// Named value lists; combinations enumerate with the first key varying
/// slowest and the last key fastest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Grid {
    pub params: Vec<(String, Vec<ParamValue>)>,
}

pub type Combination = Vec<(String, ParamValue)>;

impl Grid {
    pub fn new(params: Vec<(&str, Vec<ParamValue>)>) -> Self {
        Self { params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }

    pub fn n_combinations(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    pub fn combinations(&self) -> Vec<Combination> {
        let total = self.n_combinations();
        (0..total)
            .map(|mut idx| {
                let mut combo = vec![(String::new(), ParamValue::Int(0)); self.params.len()];
                for (slot, (name, values)) in self.params.iter().enumerate().rev() {
                    combo[slot] = (name.clone(), values[idx % values.len()].clone());
                    idx /= values.len();
                }
                combo
            })
            .collect()
    }
}

fn ints(v: &[i64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Int(x)).collect()
}

fn floats(v: &[f64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Float(x)).collect()
}

fn text(v: &[&str]) -> Vec<ParamValue> {
    v.iter().map(|x| ParamValue::Text(x.to_string())).collect()
}

/// 4·4·3·3·3 = 432 combinations.
pub fn rf_default_grid() -> Grid {
    let mut depth = ints(&[10, 20, 40]);
    depth.push(ParamValue::Text("none".into()));
    Grid::new(vec![
        ("n_estimators", ints(&[200, 350, 500, 700])),
        ("max_depth", depth),
        ("min_samples_split", ints(&[2, 5, 10])),
        ("min_samples_leaf", ints(&[1, 2, 4])),
        ("max_features", text(&["sqrt", "log2", "none"])),
    ])
}

pub fn gbt_default_grid() -> Grid {
    Grid::new(vec![
        ("n_estimators", ints(&[300, 500, 700])),
        ("learning_rate", floats(&[0.01, 0.05, 0.1])),
        ("max_depth", ints(&[4, 6, 10])),
        ("subsample", floats(&[0.6, 0.8, 1.0])),
        ("colsample_bytree", floats(&[0.6, 0.8, 1.0])),
        ("gamma", floats(&[0.0, 0.2, 0.4])),
    ])
}

fn apply_rf(base: &ForestParams, combo: &[(String, ParamValue)]) -> Result<ForestParams, EvalError> {
    let mut p = *base;
    for (name, v) in combo {
        match name.as_str() {
            "n_estimators" => p.n_estimators = v.as_usize(name)?,
            "max_depth" => p.max_depth = v.as_depth(name)?,
            "min_samples_split" => p.min_samples_split = v.as_usize(name)?,
            "min_samples_leaf" => p.min_samples_leaf = v.as_usize(name)?,
            "max_features" => p.max_features = v.as_max_features(name)?,
            _ => return Err(EvalError::BadParam { name: name.clone(), message: "unknown random-forest parameter".into() }),
        }
    }
    Ok(p)
}

fn apply_gbt(base: &GbtParams, combo: &[(String, ParamValue)]) -> Result<GbtParams, EvalError> {
    let mut p = *base;
    for (name, v) in combo {
        match name.as_str() {
            "n_estimators" => p.n_estimators = v.as_usize(name)?,
            "learning_rate" => p.learning_rate = v.as_f64(name)?,
            "max_depth" => p.max_depth = v.as_depth(name)?,
            "subsample" => p.subsample = v.as_f64(name)?,
            "colsample_bytree" => p.colsample_bytree = v.as_f64(name)?,
            "gamma" => p.gamma = v.as_f64(name)?,
            "lambda" | "reg_lambda" => p.lambda = v.as_f64(name)?,
            _ => return Err(EvalError::BadParam { name: name.clone(), message: "unknown boosting parameter".into() }),
        }
    }
    Ok(p)
}

/// Overlay one grid combination on base parameters.
pub fn apply_combination(base: &ModelParams, combo: &[(String, ParamValue)]) -> Result<ModelParams, EvalError> {
    match base {
        ModelParams::Rf(p) => apply_rf(p, combo).map(ModelParams::Rf),
        ModelParams::Gbt(p) => apply_gbt(p, combo).map(ModelParams::Gbt),
        ModelParams::Lstm(_) => Err(EvalError::BadParam { name: "model".into(), message: "grid search covers rf and gbt".into() }),
    }
}

/// Fit on `(x, y)` and predict `x_eval` in log space. Early stopping is
/// switched off here since folds carry no separate validation rows.
pub fn fit_predict(params: &ModelParams, x: &Matrix, y: &[f64], x_eval: &Matrix) -> Result<Vec<f64>, EvalError> {
    let model_err = |e: &dyn std::fmt::Display| EvalError::Model(e.to_string());
    match params {
        ModelParams::Rf(p) => {
            let m = fit_forest(x, y, p).map_err(|e| model_err(&e))?;
            predict_forest(&m, x_eval).map_err(|e| model_err(&e))
        }
        ModelParams::Gbt(p) => {
            let p = GbtParams { early_stopping_rounds: None, ..*p };
            let m = fit_gbt(x, y, &p, None).map_err(|e| model_err(&e))?;
            predict_gbt(&m, x_eval).map_err(|e| model_err(&e))
        }
        ModelParams::Lstm(_) => Err(EvalError::BadParam { name: "model".into(), message: "grid search covers rf and gbt".into() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub combinations: Vec<Combination>,
    /// Mean held-out RMSE (log space) per combination.
    pub scores: Vec<f64>,
    pub best: usize,
    pub best_params: ModelParams,
    pub fits: usize,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.combinations.first().map(|c| c.iter().map(|(n, _)| n.as_str()).collect()).unwrap_or_default();
        out.push_str(&names.join(","));
        out.push_str(if names.is_empty() { "mean_rmse_log,best\n" } else { ",mean_rmse_log,best\n" });
        for (i, (combo, score)) in self.combinations.iter().zip(&self.scores).enumerate() {
            for (_, v) in combo {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{score:.6},{}\n", i == self.best));
        }
        out
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Score every combination by mean fold RMSE; lowest wins, first on ties.
/// `(combination, fold)` fits run in parallel and are gathered by index.
pub fn grid_search(base: &ModelParams, grid: &Grid, x: &Matrix, y: &[f64], plan: &CvPlan) -> Result<GridResult, EvalError> {
    let combinations = grid.combinations();
    if combinations.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let params: Vec<ModelParams> = combinations.iter().map(|c| apply_combination(base, c)).collect::<Result<_, _>>()?;
    let k = plan.k();
    let fold_data: Vec<(Matrix, Vec<f64>, Matrix, Vec<f64>)> = (0..k)
        .map(|f| {
            let fit = plan.training_positions(f);
            let held = &plan.folds[f];
            (
                x.select_rows(&fit),
                fit.iter().map(|&i| y[i]).collect(),
                x.select_rows(held),
                held.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();
    let fold_scores: Vec<f64> = (0..params.len() * k)
        .into_par_iter()
        .map(|job| {
            let (c, f) = (job / k, job % k);
            let (fx, fy, hx, hy) = &fold_data[f];
            fit_predict(&params[c], fx, fy, hx).map(|pred| rmse(&pred, hy))
        })
        .collect::<Result<_, _>>()?;
    let scores: Vec<f64> = fold_scores.chunks(k).map(|s| s.iter().sum::<f64>() / k as f64).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(GridResult { best_params: params[best].clone(), combinations, scores, best, fits: params.len() * k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes() {
        let p = kfold_indices(10, 5, 1).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 2));
        let q = kfold_indices(11, 5, 1).unwrap();
        assert_eq!(q.folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2, 2, 2]);
        assert_eq!(q, kfold_indices(11, 5, 1).unwrap());
        let mut all: Vec<usize> = q.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert!(matches!(kfold_indices(3, 5, 0), Err(EvalError::TooFewRows { .. })));
    }

    #[test]
    fn default_grids_enumerate() {
        assert_eq!(rf_default_grid().combinations().len(), 432);
        assert_eq!(gbt_default_grid().n_combinations(), 729);
        let combos = rf_default_grid().combinations();
        assert_eq!(combos[0][0].1, ParamValue::Int(200));
        assert_eq!(combos[1][4].1, ParamValue::Text("log2".into()));
        let all: Vec<ModelParams> =
            combos.iter().map(|c| apply_combination(&ModelParams::Rf(ForestParams::default()), c).unwrap()).collect();
        assert_eq!(all.len(), 432);
    }

    fn deep_signal() -> (Matrix, Vec<f64>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..64 {
            let a = (i % 8) as f64;
            let b = (i / 8) as f64;
            rows.push(vec![a, b]);
            y.push(a * a);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn deeper_trees_win_on_staircase() {
        let (x, y) = deep_signal();
        let base = ModelParams::Gbt(GbtParams {
            n_estimators: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            gamma: 0.0,
            lambda: 0.0,
            ..GbtParams::default()
        });
        let grid = Grid::new(vec![("max_depth", ints(&[1, 10]))]);
        let plan = kfold_indices(64, 5, 3).unwrap();
        let r = grid_search(&base, &grid, &x, &y, &plan).unwrap();
        assert_eq!(r.best, 1);
        assert_eq!(r.fits, 10);
        assert_eq!(r.scores.len(), 2);
    }

    #[test]
    fn single_combination_and_ties() {
        let (x, y) = deep_signal();
        let plan = kfold_indices(64, 5, 3).unwrap();
        let base = ModelParams::Rf(ForestParams { n_estimators: 2, ..ForestParams::default() });
        let r = grid_search(&base, &Grid::new(vec![("min_samples_leaf", ints(&[1]))]), &x, &y, &plan).unwrap();
        assert_eq!(r.best, 0);
        // Identical combinations score identically; the first one wins.
        let r = grid_search(&base, &Grid::new(vec![("min_samples_leaf", ints(&[3, 3]))]), &x, &y, &plan).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.best, 0);
        assert!(r.to_csv().starts_with("min_samples_leaf,mean_rmse_log,best\n3,"));
    }

    #[test]
    fn bad_values_are_reported() {
        let base = ModelParams::Rf(ForestParams::default());
        let combo = vec![("max_features".to_string(), ParamValue::Text("cube".into()))];
        assert!(matches!(apply_combination(&base, &combo), Err(EvalError::BadParam { .. })));
        let combo = vec![("learning_rate".to_string(), ParamValue::Float(0.1))];
        assert!(matches!(apply_combination(&base, &combo), Err(EvalError::BadParam { .. })));
    }

    #[test]
    fn params_parse_from_toml() {
        #[derive(Deserialize)]
        struct G {
            v: Vec<ParamValue>,
        }
        let g: G = toml::from_str("v = [10, 0.5, \"none\"]").unwrap();
        assert_eq!(g.v, vec![ParamValue::Int(10), ParamValue::Float(0.5), ParamValue::Text("none".into())]);
    }
}

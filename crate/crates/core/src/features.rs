//! Model-ready matrices: seasonal/spatial/size features, categorical codes,
//! standardization and the temporal train/test split.
//!
//! Column layout is the numeric block followed by the categorical block:
//! `log_acres, latitude, longitude, alarm_month, alarm_day_of_year, CAUSE,
//! AGENCY, UNIT_ID, C_METHOD, OBJECTIVE`. Categorical columns hold dense
//! integer codes assigned by first appearance in the training rows; code `k`
//! (the number of training values) is reserved for values never seen in
//! training.

use std::collections::HashMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::FireRecord;
use crate::matrix::Matrix;

pub const NUMERIC_COLUMNS: [&str; 5] = ["log_acres", "latitude", "longitude", "alarm_month", "alarm_day_of_year"];
pub const CATEGORICAL_COLUMNS: [&str; 5] = ["CAUSE", "AGENCY", "UNIT_ID", "C_METHOD", "OBJECTIVE"];
pub const DEFAULT_SPLIT_YEAR: i32 = 2018;
/// Raw value used for an absent categorical cell.
pub const MISSING_CATEGORY: &str = "NA";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown feature column {0}")]
    UnknownColumn(String),
    #[error("degenerate split: {train} train rows, {test} test rows")]
    DegenerateSplit { train: usize, test: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

fn numeric_value(r: &FireRecord, column: &str) -> Option<f64> {
    Some(match column {
        "log_acres" => r.log_acres(),
        "latitude" => r.latitude,
        "longitude" => r.longitude,
        "alarm_month" => r.alarm_date.month() as f64,
        "alarm_day_of_year" => r.alarm_date.ordinal() as f64,
        _ => return None,
    })
}

fn categorical_value(r: &FireRecord, column: &str) -> Option<String> {
    let text = match column {
        "CAUSE" => r.cause_code.map(|c| c.to_string()),
        "AGENCY" => r.agency_code.clone(),
        "UNIT_ID" => r.unit_id.clone(),
        "C_METHOD" => r.c_method_code.map(|c| c.to_string()),
        "OBJECTIVE" => r.objective_code.map(|c| c.to_string()),
        _ => return None,
    };
    Some(text.unwrap_or_else(|| MISSING_CATEGORY.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub column: String,
    /// Raw values in code order.
    pub values: Vec<String>,
}

impl CategoryMap {
    pub fn unseen_code(&self) -> usize {
        self.values.len()
    }

    /// Number of codes including the reserved one.
    pub fn cardinality(&self) -> usize {
        self.values.len() + 1
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.values.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect()
    }

    pub fn code(&self, value: &str) -> usize {
        self.values.iter().position(|v| v == value).unwrap_or(self.unseen_code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub category_maps: Vec<CategoryMap>,
}

impl FeatureSpec {
    pub fn width(&self) -> usize {
        self.numeric_columns.len() + self.categorical_columns.len()
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric_columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.numeric_columns.iter().chain(&self.categorical_columns).cloned().collect()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.category_maps.iter().map(CategoryMap::cardinality).collect()
    }
}

/// Fit category maps on training records; codes follow first appearance.
pub fn build_feature_spec(train_records: &[FireRecord]) -> Result<FeatureSpec, FeatureError> {
    if train_records.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let category_maps = CATEGORICAL_COLUMNS
        .iter()
        .map(|&column| {
            let mut values: Vec<String> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for r in train_records {
                let v = categorical_value(r, column).expect("known column");
                if seen.insert(v.clone()) {
                    values.push(v);
                }
            }
            CategoryMap { column: column.to_string(), values }
        })
        .collect();
    Ok(FeatureSpec {
        numeric_columns: NUMERIC_COLUMNS.iter().map(|s| s.to_string()).collect(),
        categorical_columns: CATEGORICAL_COLUMNS.iter().map(|s| s.to_string()).collect(),
        category_maps,
    })
}

/// Feature rows for `records` under a fitted spec. Never reads CONT_DATE,
/// YEAR_ or the target.
pub fn feature_matrix(records: &[FireRecord], spec: &FeatureSpec) -> Result<Matrix, FeatureError> {
    for c in &spec.numeric_columns {
        if !NUMERIC_COLUMNS.contains(&c.as_str()) {
            return Err(FeatureError::UnknownColumn(c.clone()));
        }
    }
    if spec.categorical_columns.len() != spec.category_maps.len() {
        return Err(FeatureError::UnknownColumn("category map count".into()));
    }
    for (c, m) in spec.categorical_columns.iter().zip(&spec.category_maps) {
        if !CATEGORICAL_COLUMNS.contains(&c.as_str()) || *c != m.column {
            return Err(FeatureError::UnknownColumn(c.clone()));
        }
    }
    let indices: Vec<HashMap<&str, usize>> = spec.category_maps.iter().map(CategoryMap::index).collect();
    let mut m = Matrix::zeros(records.len(), spec.width());
    let n_num = spec.n_numeric();
    for (i, r) in records.iter().enumerate() {
        for (j, c) in spec.numeric_columns.iter().enumerate() {
            m.set(i, j, numeric_value(r, c).expect("validated"));
        }
        for (j, (c, map)) in spec.categorical_columns.iter().zip(&spec.category_maps).enumerate() {
            let v = categorical_value(r, c).expect("validated");
            let code = indices[j].get(v.as_str()).copied().unwrap_or(map.unseen_code());
            m.set(i, n_num + j, code as f64);
        }
    }
    Ok(m)
}

/// Alarm year before `threshold_year` trains, the rest tests. YEAR_ is never
/// consulted.
pub fn temporal_split(alarm_dates: &[NaiveDate], threshold_year: i32) -> Result<Vec<Split>, FeatureError> {
    let split: Vec<Split> =
        alarm_dates.iter().map(|d| if d.year() < threshold_year { Split::Train } else { Split::Test }).collect();
    let train = split.iter().filter(|s| **s == Split::Train).count();
    let test = split.len() - train;
    if train == 0 || test == 0 {
        return Err(FeatureError::DegenerateSplit { train, test });
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    /// `ln(1 + days)`.
    pub target: Vec<f64>,
    pub target_days: Vec<f64>,
    pub alarm_dates: Vec<NaiveDate>,
    pub spec: FeatureSpec,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    pub fn subset(&self, rows: &[usize]) -> (Matrix, Vec<f64>) {
        (self.features.select_rows(rows), rows.iter().map(|&i| self.target[i]).collect())
    }

    /// Split `rows` into (fit, holdout) where holdout is the latest
    /// `fraction` of rows by alarm date (ties by row index).
    pub fn temporal_holdout(&self, rows: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let mut ordered = rows.to_vec();
        ordered.sort_by_key(|&i| (self.alarm_dates[i], i));
        let n_hold = ((rows.len() as f64 * fraction).ceil() as usize).min(rows.len().saturating_sub(1));
        let hold: std::collections::HashSet<usize> = ordered[rows.len() - n_hold..].iter().copied().collect();
        let fit = rows.iter().copied().filter(|i| !hold.contains(i)).collect();
        let holdout = rows.iter().copied().filter(|i| hold.contains(i)).collect();
        (fit, holdout)
    }
}

pub fn build_matrix(records: &[FireRecord], spec: &FeatureSpec, split: Vec<Split>) -> Result<Dataset, FeatureError> {
    if records.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    assert_eq!(records.len(), split.len(), "one split label per record");
    Ok(Dataset {
        features: feature_matrix(records, spec)?,
        target: records.iter().map(|r| r.log_cont_days).collect(),
        target_days: records.iter().map(|r| r.containment_days as f64).collect(),
        alarm_dates: records.iter().map(|r| r.alarm_date).collect(),
        spec: spec.clone(),
        split,
    })
}

/// Split by alarm year, fit the spec on training rows and build the matrix.
pub fn prepare_dataset(records: &[FireRecord], split_year: i32) -> Result<Dataset, FeatureError> {
    if records.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let dates: Vec<NaiveDate> = records.iter().map(|r| r.alarm_date).collect();
    let split = temporal_split(&dates, split_year)?;
    let train: Vec<FireRecord> =
        records.iter().zip(&split).filter(|(_, s)| **s == Split::Train).map(|(r, _)| r.clone()).collect();
    let spec = build_feature_spec(&train)?;
    build_matrix(records, &spec, split)
}

/// Per numeric column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero spread; they transform to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    /// Fit on the numeric block (`0..n_numeric`) of the given rows.
    pub fn fit_rows(x: &Matrix, rows: &[usize], n_numeric: usize) -> Result<Self, FeatureError> {
        if rows.is_empty() {
            return Err(FeatureError::EmptyDataset);
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; n_numeric];
        let mut stds = vec![0.0; n_numeric];
        for j in 0..n_numeric {
            let mean = rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = var.sqrt();
        }
        let constant = stds.iter().zip(&means).map(|(&s, &m)| s <= 1e-12 * m.abs().max(1.0)).collect();
        Ok(Self { means, stds, constant })
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..self.means.len() {
                let v = if self.constant[j] { 0.0 } else { (x.get(i, j) - self.means[j]) / self.stds[j] };
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        for j in 0..self.means.len() {
            out[j] = if self.constant[j] { 0.0 } else { (row[j] - self.means[j]) / self.stds[j] };
        }
        out
    }
}

pub fn fit_standardizer(dataset: &Dataset) -> Result<Standardizer, FeatureError> {
    Standardizer::fit_rows(&dataset.features, &dataset.train_indices(), dataset.spec.n_numeric())
}

pub fn apply_standardizer(standardizer: &Standardizer, x: &Matrix) -> Matrix {
    standardizer.apply(x)
}

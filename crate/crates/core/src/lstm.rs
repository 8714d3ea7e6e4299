//! Single-layer LSTM regressor with categorical embeddings.
//!
//! Rows are `[numeric..., code...]` with the numeric block standardized.
//! A static row is a length-1 sequence; longer sequences run the recurrent
//! path and are trained with backpropagation through time. All parameters
//! live in one flat vector laid out by [`LstmShape`], which keeps the Adam
//! update and the finite-difference checks simple.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream_rng, StreamRng};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum LstmError {
    #[error("categorical code {value} out of range for column {column} ({rows} rows)")]
    CodeOutOfRange { column: usize, value: f64, rows: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmParams {
    pub units: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    /// Per categorical column; `None` uses `min(8, ceil(k/2))`.
    pub embedding_dims: Option<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            units: 192,
            dropout: 0.1,
            learning_rate: 0.001,
            embedding_dims: None,
            epochs: 100,
            batch_size: 64,
            patience: 10,
            seed: 42,
        }
    }
}

impl LstmParams {
    fn validate(&self) -> Result<(), LstmError> {
        let bad = |m: &str| Err(LstmError::InvalidParam(m.to_string()));
        if self.units == 0 {
            return bad("units must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

/// `min(8, ceil(k/2))` for a column with `k` observed categories, at least 1.
pub fn default_embedding_dim(categories: usize) -> usize {
    categories.div_ceil(2).clamp(1, 8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmShape {
    pub n_numeric: usize,
    /// Rows per embedding table (observed categories plus the unseen code).
    pub table_rows: Vec<usize>,
    pub embedding_dims: Vec<usize>,
    pub units: usize,
}

impl LstmShape {
    /// `cardinalities` count the reserved unseen code, as in `FeatureSpec`.
    pub fn new(n_numeric: usize, cardinalities: &[usize], units: usize, embedding_dims: Option<&[usize]>) -> Result<Self, LstmError> {
        let dims: Vec<usize> = match embedding_dims {
            Some(d) if d.len() != cardinalities.len() => {
                return Err(LstmError::ShapeMismatch(format!(
                    "{} embedding dims for {} categorical columns",
                    d.len(),
                    cardinalities.len()
                )))
            }
            Some(d) => d.to_vec(),
            None => cardinalities.iter().map(|&k| default_embedding_dim(k.saturating_sub(1))).collect(),
        };
        Ok(Self { n_numeric, table_rows: cardinalities.to_vec(), embedding_dims: dims, units })
    }

    pub fn row_width(&self) -> usize {
        self.n_numeric + self.table_rows.len()
    }

    pub fn input_width(&self) -> usize {
        self.n_numeric + self.embedding_dims.iter().sum::<usize>()
    }

    fn embedding_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.table_rows.len());
        let mut off = 0;
        for (r, d) in self.table_rows.iter().zip(&self.embedding_dims) {
            out.push(off);
            off += r * d;
        }
        out
    }

    fn embedding_len(&self) -> usize {
        self.table_rows.iter().zip(&self.embedding_dims).map(|(r, d)| r * d).sum()
    }

    fn w_offset(&self) -> usize {
        self.embedding_len()
    }

    fn u_offset(&self) -> usize {
        self.w_offset() + 4 * self.units * self.input_width()
    }

    fn b_offset(&self) -> usize {
        self.u_offset() + 4 * self.units * self.units
    }

    fn out_offset(&self) -> usize {
        self.b_offset() + 4 * self.units
    }

    pub fn n_params(&self) -> usize {
        self.out_offset() + self.units + 1
    }

    /// (name, dims, start offset) for every tensor in layout order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, usize)> {
        let u = self.units;
        let inp = self.input_width();
        let mut out = Vec::new();
        for (c, off) in self.embedding_offsets().into_iter().enumerate() {
            out.push((format!("E_{c}"), vec![self.table_rows[c], self.embedding_dims[c]], off));
        }
        for (k, gate) in ["i", "f", "g", "o"].iter().enumerate() {
            out.push((format!("W_{gate}"), vec![u, inp], self.w_offset() + k * u * inp));
        }
        for (k, gate) in ["i", "f", "g", "o"].iter().enumerate() {
            out.push((format!("U_{gate}"), vec![u, u], self.u_offset() + k * u * u));
        }
        for (k, gate) in ["i", "f", "g", "o"].iter().enumerate() {
            out.push((format!("b_{gate}"), vec![u], self.b_offset() + k * u));
        }
        out.push(("w_out".to_string(), vec![u], self.out_offset()));
        out.push(("b_out".to_string(), vec![1], self.out_offset() + u));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub shape: LstmShape,
    pub params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    codes: Vec<usize>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, stacked i, f, g, o.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Activations kept by the forward pass for [`lstm_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<StepCache>,
    h: Vec<f64>,
    mask: Vec<f64>,
    pub prediction: f64,
}

impl ForwardCache {
    pub fn final_hidden(&self) -> &[f64] {
        &self.h
    }

    pub fn final_cell(&self) -> Vec<f64> {
        let s = self.steps.last().expect("non-empty sequence");
        let u = s.tanh_c.len();
        (0..u).map(|k| s.gates[u + k] * s.c_prev[k] + s.gates[k] * s.gates[2 * u + k]).collect()
    }
}

impl LstmWeights {
    pub fn zeros(shape: LstmShape) -> Self {
        let n = shape.n_params();
        Self { shape, params: vec![0.0; n] }
    }

    /// Glorot-uniform gate and head weights, small uniform embeddings,
    /// zero biases except the forget gate (1) and the output bias.
    pub fn init(shape: LstmShape, output_bias: f64, rng: &mut StreamRng) -> Self {
        let mut w = Self::zeros(shape);
        let s = w.shape.clone();
        let (u, inp) = (s.units, s.input_width());
        for v in &mut w.params[..s.embedding_len()] {
            *v = rng.gen_range(-0.05..0.05);
        }
        let lim_w = (6.0 / (inp + u) as f64).sqrt();
        for v in &mut w.params[s.w_offset()..s.u_offset()] {
            *v = rng.gen_range(-lim_w..lim_w);
        }
        let lim_u = (6.0 / (2 * u) as f64).sqrt();
        for v in &mut w.params[s.u_offset()..s.b_offset()] {
            *v = rng.gen_range(-lim_u..lim_u);
        }
        for v in &mut w.params[s.b_offset() + u..s.b_offset() + 2 * u] {
            *v = 1.0;
        }
        let lim_o = (6.0 / (u + 1) as f64).sqrt();
        for v in &mut w.params[s.out_offset()..s.out_offset() + u] {
            *v = rng.gen_range(-lim_o..lim_o);
        }
        w.params[s.out_offset() + u] = output_bias;
        w
    }

    pub fn tensor(&self, name: &str) -> Option<NamedTensor> {
        self.named_tensors().into_iter().find(|t| t.name == name)
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.shape
            .tensors()
            .into_iter()
            .map(|(name, shape, off)| {
                let len: usize = shape.iter().product();
                NamedTensor { name, shape, values: self.params[off..off + len].to_vec() }
            })
            .collect()
    }

    pub fn from_named_tensors(shape: LstmShape, tensors: &[NamedTensor]) -> Result<Self, LstmError> {
        let mut w = Self::zeros(shape);
        for (name, dims, off) in w.shape.tensors() {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| LstmError::ShapeMismatch(format!("missing tensor {name}")))?;
            if t.shape != dims || t.values.len() != dims.iter().product::<usize>() {
                return Err(LstmError::ShapeMismatch(format!("tensor {name} has shape {:?}, expected {dims:?}", t.shape)));
            }
            w.params[off..off + t.values.len()].copy_from_slice(&t.values);
        }
        Ok(w)
    }

    fn input_of(&self, row: &[f64]) -> Result<(Vec<f64>, Vec<usize>), LstmError> {
        let s = &self.shape;
        if row.len() != s.row_width() {
            return Err(LstmError::ShapeMismatch(format!("row has {} values, expected {}", row.len(), s.row_width())));
        }
        let mut x = Vec::with_capacity(s.input_width());
        x.extend_from_slice(&row[..s.n_numeric]);
        let mut codes = Vec::with_capacity(s.table_rows.len());
        for (c, off) in s.embedding_offsets().into_iter().enumerate() {
            let v = row[s.n_numeric + c];
            let rows = s.table_rows[c];
            if !(v >= 0.0 && v.fract() == 0.0 && (v as usize) < rows) {
                return Err(LstmError::CodeOutOfRange { column: c, value: v, rows });
            }
            let code = v as usize;
            let d = s.embedding_dims[c];
            x.extend_from_slice(&self.params[off + code * d..off + (code + 1) * d]);
            codes.push(code);
        }
        Ok((x, codes))
    }

    fn step(&self, row: &[f64], h_prev: Vec<f64>, c_prev: Vec<f64>) -> Result<StepCache, LstmError> {
        let (x, codes) = self.input_of(row)?;
        let s = &self.shape;
        let (u, inp) = (s.units, s.input_width());
        let w = &self.params[s.w_offset()..s.u_offset()];
        let um = &self.params[s.u_offset()..s.b_offset()];
        let b = &self.params[s.b_offset()..s.out_offset()];
        let recurrent = h_prev.iter().any(|&v| v != 0.0);
        let mut gates = vec![0.0; 4 * u];
        for r in 0..4 * u {
            let wr = &w[r * inp..(r + 1) * inp];
            let mut z = b[r] + wr.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            if recurrent {
                z += um[r * u..(r + 1) * u].iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            gates[r] = if r / u == 2 { z.tanh() } else { sigmoid(z) };
        }
        let tanh_c = (0..u).map(|k| (gates[u + k] * c_prev[k] + gates[k] * gates[2 * u + k]).tanh()).collect();
        Ok(StepCache { x, codes, h_prev, c_prev, gates, tanh_c })
    }
}

/// Run a sequence from the given state (zeros when `None`). With
/// `training = Some((rate, rng))` inverted dropout is applied to the final
/// hidden state.
pub fn lstm_forward_sequence(
    weights: &LstmWeights,
    sequence: &[&[f64]],
    initial: Option<(&[f64], &[f64])>,
    training: Option<(f64, &mut StreamRng)>,
) -> Result<(f64, ForwardCache), LstmError> {
    let u = weights.shape.units;
    if sequence.is_empty() {
        return Err(LstmError::ShapeMismatch("empty sequence".into()));
    }
    let (mut h, mut c) = match initial {
        Some((h0, c0)) if h0.len() == u && c0.len() == u => (h0.to_vec(), c0.to_vec()),
        Some(_) => return Err(LstmError::ShapeMismatch("initial state width differs from units".into())),
        None => (vec![0.0; u], vec![0.0; u]),
    };
    let mut steps = Vec::with_capacity(sequence.len());
    for row in sequence {
        let st = weights.step(row, h, c)?;
        c = (0..u).map(|k| st.gates[u + k] * st.c_prev[k] + st.gates[k] * st.gates[2 * u + k]).collect();
        h = (0..u).map(|k| st.gates[3 * u + k] * st.tanh_c[k]).collect();
        steps.push(st);
    }
    let mask = match training {
        Some((rate, rng)) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            (0..u).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
        }
        _ => vec![1.0; u],
    };
    let out = weights.shape.out_offset();
    let w_out = &weights.params[out..out + u];
    let prediction = weights.params[out + u] + (0..u).map(|k| w_out[k] * h[k] * mask[k]).sum::<f64>();
    Ok((prediction, ForwardCache { steps, h, mask, prediction }))
}

/// One static row as a length-1 sequence.
pub fn lstm_forward(
    weights: &LstmWeights,
    row: &[f64],
    training: Option<(f64, &mut StreamRng)>,
) -> Result<(f64, ForwardCache), LstmError> {
    lstm_forward_sequence(weights, &[row], None, training)
}

/// Gradient of `mean_b (yhat_b - y_b)^2` with respect to every parameter,
/// returned with the same layout as `weights`.
pub fn lstm_backward(weights: &LstmWeights, caches: &[ForwardCache], targets: &[f64]) -> Result<LstmWeights, LstmError> {
    if caches.len() != targets.len() || caches.is_empty() {
        return Err(LstmError::ShapeMismatch(format!("{} caches for {} targets", caches.len(), targets.len())));
    }
    let mut grad = LstmWeights::zeros(weights.shape.clone());
    let scale = 2.0 / caches.len() as f64;
    for (cache, &y) in caches.iter().zip(targets) {
        accumulate_gradient(weights, cache, scale * (cache.prediction - y), &mut grad.params);
    }
    Ok(grad)
}

fn accumulate_gradient(weights: &LstmWeights, cache: &ForwardCache, dy: f64, g: &mut [f64]) {
    let s = &weights.shape;
    let (u, inp) = (s.units, s.input_width());
    let (wo, uo, bo, oo) = (s.w_offset(), s.u_offset(), s.b_offset(), s.out_offset());
    let emb_offsets = s.embedding_offsets();
    let p = &weights.params;

    let mut dh = vec![0.0; u];
    for k in 0..u {
        g[oo + k] += dy * cache.h[k] * cache.mask[k];
        dh[k] = dy * p[oo + k] * cache.mask[k];
    }
    g[oo + u] += dy;

    let mut dc = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    for (t, st) in cache.steps.iter().enumerate().rev() {
        for k in 0..u {
            let (i, f, gg, o) = (st.gates[k], st.gates[u + k], st.gates[2 * u + k], st.gates[3 * u + k]);
            let tc = st.tanh_c[k];
            let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dck * gg * i * (1.0 - i);
            dz[u + k] = dck * st.c_prev[k] * f * (1.0 - f);
            dz[2 * u + k] = dck * i * (1.0 - gg * gg);
            dz[3 * u + k] = dh[k] * tc * o * (1.0 - o);
            dc[k] = dck * f;
        }
        for r in 0..4 * u {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            g[bo + r] += d;
            let gw = &mut g[wo + r * inp..wo + (r + 1) * inp];
            for (a, x) in gw.iter_mut().zip(&st.x) {
                *a += d * x;
            }
        }
        // Input gradient feeds the embedding rows that were looked up.
        let mut col = s.n_numeric;
        for (c, &code) in st.codes.iter().enumerate() {
            let d = s.embedding_dims[c];
            let base = emb_offsets[c] + code * d;
            for j in 0..d {
                let mut acc = 0.0;
                for r in 0..4 * u {
                    acc += p[wo + r * inp + col + j] * dz[r];
                }
                g[base + j] += acc;
            }
            col += d;
        }
        let recurrent = st.h_prev.iter().any(|&v| v != 0.0);
        if recurrent {
            for r in 0..4 * u {
                let d = dz[r];
                let gu = &mut g[uo + r * u..uo + (r + 1) * u];
                for (a, h) in gu.iter_mut().zip(&st.h_prev) {
                    *a += d * h;
                }
            }
        }
        if t > 0 {
            for k in 0..u {
                dh[k] = (0..4 * u).map(|r| p[uo + r * u + k] * dz[r]).sum();
            }
        }
    }
}

/// Inference-mode predictions for static rows.
pub fn predict_lstm(weights: &LstmWeights, x: &Matrix) -> Result<Vec<f64>, LstmError> {
    x.rows().map(|r| lstm_forward(weights, r, None).map(|(p, _)| p)).collect()
}

/// Inference-mode mean squared error.
pub fn mse_loss(weights: &LstmWeights, x: &Matrix, y: &[f64]) -> Result<f64, LstmError> {
    let pred = predict_lstm(weights, x)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    /// Inference-mode training MSE after each epoch.
    pub train_loss: Vec<f64>,
    /// Validation RMSE before training (index 0) and after each epoch.
    pub validation_rmse: Vec<f64>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmFit {
    pub params: LstmParams,
    pub weights: LstmWeights,
    pub curve: TrainingCurve,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for j in 0..params.len() {
            let gj = grad[j];
            self.m[j] = ADAM_BETA1 * self.m[j] + (1.0 - ADAM_BETA1) * gj;
            self.v[j] = ADAM_BETA2 * self.v[j] + (1.0 - ADAM_BETA2) * gj * gj;
            if self.m[j] != 0.0 {
                params[j] -= lr * (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn rmse_of(weights: &LstmWeights, x: &Matrix, y: &[f64]) -> Result<f64, LstmError> {
    Ok(mse_loss(weights, x, y)?.sqrt())
}

/// Adam on shuffled mini-batches. With validation rows, training stops
/// after `patience` epochs without improvement and the best weights seen
/// (possibly the initial ones) are returned.
pub fn fit_lstm(
    x: &Matrix,
    y: &[f64],
    n_numeric: usize,
    cardinalities: &[usize],
    params: &LstmParams,
    validation: Option<(&Matrix, &[f64])>,
) -> Result<LstmFit, LstmError> {
    let n = x.n_rows();
    if n == 0 || y.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    if y.len() != n {
        return Err(LstmError::ShapeMismatch(format!("{n} rows and {} targets", y.len())));
    }
    params.validate()?;
    let shape = LstmShape::new(n_numeric, cardinalities, params.units, params.embedding_dims.as_deref())?;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut weights = LstmWeights::init(shape, mean_y, &mut stream_rng(params.seed, 0));
    let mut shuffle_rng = stream_rng(params.seed, 1);
    let mut dropout_rng = stream_rng(params.seed, 2);
    let validation = validation.filter(|(vx, _)| vx.n_rows() > 0);

    let mut curve = TrainingCurve { train_loss: Vec::new(), validation_rmse: Vec::new(), best_epoch: 0 };
    let mut best = weights.clone();
    if let Some((vx, vy)) = validation {
        curve.validation_rmse.push(rmse_of(&weights, vx, vy)?);
    }
    let mut adam = Adam::new(weights.params.len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; weights.params.len()];
    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(params.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let (pred, cache) = lstm_forward(&weights, x.row(i), Some((params.dropout, &mut dropout_rng)))?;
                accumulate_gradient(&weights, &cache, scale * (pred - y[i]), &mut grad);
            }
            adam.update(&mut weights.params, &grad, params.learning_rate);
        }
        curve.train_loss.push(mse_loss(&weights, x, y)?);
        if let Some((vx, vy)) = validation {
            let score = rmse_of(&weights, vx, vy)?;
            curve.validation_rmse.push(score);
            if score < curve.validation_rmse[curve.best_epoch] {
                curve.best_epoch = epoch;
                best = weights.clone();
            }
            if epoch - curve.best_epoch >= params.patience {
                break;
            }
        } else {
            curve.best_epoch = epoch;
        }
    }
    let weights = if validation.is_some() { best } else { weights };
    Ok(LstmFit { params: params.clone(), weights, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub units: Vec<usize>,
    pub dropout: (f64, f64),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { units: (1..=8).map(|k| 32 * k).collect(), dropout: (0.0, 0.5), learning_rate: (1e-4, 1e-2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: LstmParams,
    pub validation_rmse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub trials: Vec<Trial>,
    pub best: usize,
}

impl TuneResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Draw `n_trials` configurations up front from `seed`, train each with its
/// own derived seed, and keep the lowest validation RMSE (first on ties).
#[allow(clippy::too_many_arguments)]
pub fn tune_lstm(
    x: &Matrix,
    y: &[f64],
    n_numeric: usize,
    cardinalities: &[usize],
    base: &LstmParams,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    validation: (&Matrix, &[f64]),
) -> Result<TuneResult, LstmError> {
    if space.units.is_empty() || n_trials == 0 {
        return Err(LstmError::InvalidParam("empty search space or zero trials".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let (lo, hi) = (space.learning_rate.0.ln(), space.learning_rate.1.ln());
    let candidates: Vec<LstmParams> = (0..n_trials)
        .map(|t| LstmParams {
            units: *space.units.choose(&mut rng).expect("non-empty"),
            dropout: if space.dropout.1 > space.dropout.0 { rng.gen_range(space.dropout.0..space.dropout.1) } else { space.dropout.0 },
            learning_rate: if hi > lo { rng.gen_range(lo..hi).exp() } else { space.learning_rate.0 },
            seed: derive_seed(seed, t as u64 + 1),
            ..base.clone()
        })
        .collect();
    let trials = run_trials(x, y, n_numeric, cardinalities, candidates, validation)?;
    let best = best_index(&trials);
    Ok(TuneResult { trials, best })
}

/// Train and score explicit configurations (used by [`tune_lstm`]).
pub fn run_trials(
    x: &Matrix,
    y: &[f64],
    n_numeric: usize,
    cardinalities: &[usize],
    candidates: Vec<LstmParams>,
    validation: (&Matrix, &[f64]),
) -> Result<Vec<Trial>, LstmError> {
    candidates
        .into_par_iter()
        .map(|p| {
            let fit = fit_lstm(x, y, n_numeric, cardinalities, &p, Some(validation))?;
            let validation_rmse = fit.curve.validation_rmse[fit.curve.best_epoch];
            Ok(Trial { seed: p.seed, params: p, validation_rmse })
        })
        .collect()
}

fn best_index(trials: &[Trial]) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.validation_rmse < trials[best].validation_rmse {
            best = i;
        }
    }
    best
}

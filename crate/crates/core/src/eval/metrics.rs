use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::EvalError;

/// `exp(x) - 1`, clamped below at 0.
pub fn inverse_transform(pred_log: f64) -> f64 {
    pred_log.exp_m1().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae_days: f64,
    pub rmse_days: f64,
    /// NaN when the truth is constant.
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub r2_days: f64,
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else {
        s.serialize_some(v)
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// MAE, RMSE and out-of-sample R² (test-set mean in the denominator).
pub fn compute_metrics(true_days: &[f64], pred_days: &[f64]) -> Result<MetricSet, EvalError> {
    if true_days.len() != pred_days.len() {
        return Err(EvalError::LengthMismatch { truth: true_days.len(), pred: pred_days.len() });
    }
    let n = true_days.len();
    if n < 2 {
        return Err(EvalError::TooFewRows { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = true_days.iter().sum::<f64>() / nf;
    let (mut abs, mut sq, mut tot) = (0.0, 0.0, 0.0);
    for (t, p) in true_days.iter().zip(pred_days) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        tot += (t - mean) * (t - mean);
    }
    let r2 = if tot > 0.0 { 1.0 - sq / tot } else { f64::NAN };
    Ok(MetricSet { mae_days: abs / nf, rmse_days: (sq / nf).sqrt(), r2_days: r2 })
}

//! Synthetic fire records with a heavy-tailed duration target.
//!
//! Eight static attributes are drawn per fire (size, latitude, longitude,
//! alarm date, cause, agency/unit, collection method, objective). Only
//! three drive the target: collection method, log size and latitude, via a
//! saturating size response scaled per method plus threshold interactions.
//! Durations are log-normal around that mean.

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clean::FireRecord;
use crate::matrix::Matrix;
use crate::rng::stream_rng;

/// Generator seed used for the bundled datasets.
pub const DEFAULT_SYNTH_SEED: u64 = 20_240_601;

/// Per collection method: base shift and slope on log size.
const METHOD_BASE: [f64; 8] = [0.0, 0.6, 0.2, 0.9, 0.1, 0.5, 1.0, 0.3];
const METHOD_SLOPE: [f64; 8] = [0.3, 0.5, 0.8, 1.0, 0.4, 0.7, 1.2, 0.6];
const AGENCIES: [&str; 5] = ["CDF", "USF", "BLM", "NPS", "CCO"];
const NOISE_SD: f64 = 0.10;

/// Mean of `ln(1 + days)` given the three driving attributes.
pub fn synth_log_mean(c_method: i64, log_acres: f64, latitude: f64) -> f64 {
    let m = (c_method - 1).clamp(0, 7) as usize;
    let mut mu = 0.2 + METHOD_BASE[m] + 0.3 * METHOD_SLOPE[m] * log_acres;
    if latitude > 38.5 && log_acres > 6.0 {
        mu += 0.7;
    }
    if latitude < 34.5 && (m == 3 || m == 6) {
        mu += 0.5;
    }
    if log_acres > 8.0 && (m == 1 || m == 2 || m == 5) {
        mu += 0.6;
    }
    mu
}

/// `n` records with alarm years spread over 2000..=2021.
pub fn synth_records(n: usize, seed: u64) -> Vec<FireRecord> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|i| {
            let year = rng.gen_range(2000..=2021);
            let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
            let days_in_year = if NaiveDate::from_ymd_opt(year, 12, 31).expect("valid").ordinal() == 366 { 366 } else { 365 };
            let alarm = start + Duration::days(rng.gen_range(0..days_in_year));
            let latitude = rng.gen_range(32.5..41.9);
            let longitude = rng.gen_range(-124.0..-114.5);
            let gis_acres = (5.0 + 2.5 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 10.0).exp();
            let c_method = rng.gen_range(1..=8);
            let agency = AGENCIES[rng.gen_range(0..AGENCIES.len())];
            let unit = format!("{agency}{}", rng.gen_range(0..4));
            let cause = rng.gen_range(1..=14);
            let objective = rng.gen_range(1..=2);
            let mu = synth_log_mean(c_method, gis_acres.ln_1p(), latitude);
            let days = ((mu + NOISE_SD * rng.sample::<f64, _>(StandardNormal)).exp() - 1.0).round().max(0.0) as u32;
            FireRecord {
                year_digitized: year,
                irwin_id: Some(format!("{{SYN-{seed:x}-{i:06}}}")),
                fire_name: format!("SYNTH {i}"),
                alarm_date: alarm,
                cont_date: alarm + Duration::days(days as i64),
                cause_code: Some(cause),
                agency_code: Some(agency.to_string()),
                unit_id: Some(unit),
                c_method_code: Some(c_method),
                objective_code: Some(objective),
                gis_acres,
                latitude,
                longitude,
                containment_days: days,
                log_cont_days: (days as f64).ln_1p(),
            }
        })
        .collect()
}

/// Uniform features where `y = 2 * x[signal] + small noise`.
pub fn single_signal(n: usize, n_features: usize, signal: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = stream_rng(seed, 0);
    let mut x = Matrix::zeros(n, n_features);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n_features {
            x.set(i, j, rng.gen::<f64>());
        }
        y.push(2.0 * x.get(i, signal) + 0.1 * rng.sample::<f64, _>(StandardNormal));
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_consistent_and_in_bounds() {
        let recs = synth_records(300, 1);
        assert_eq!(recs, synth_records(300, 1));
        for r in &recs {
            assert!(r.in_bounds());
            assert_eq!((r.cont_date - r.alarm_date).num_days(), r.containment_days as i64);
            assert_eq!(r.log_cont_days, (r.containment_days as f64).ln_1p());
        }
        let max = recs.iter().map(|r| r.containment_days).max().unwrap();
        let mean = recs.iter().map(|r| r.containment_days as f64).sum::<f64>() / 300.0;
        assert!(max as f64 > 5.0 * mean, "heavy right tail: max {max}, mean {mean}");
    }

    #[test]
    fn only_driving_attributes_matter() {
        assert_eq!(synth_log_mean(3, 2.0, 36.0), synth_log_mean(3, 2.0, 37.0));
        assert!(synth_log_mean(7, 10.0, 40.0) > synth_log_mean(1, 10.0, 40.0));
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifact::{ModelArtifact, ModelKind};
use super::metrics::{compute_metrics, inverse_transform, MetricSet};
use super::residuals::{residual_analysis, ResidualBin};
use super::EvalError;
use crate::features::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub kind: ModelKind,
    pub metrics: MetricSet,
    pub residual_bins: Vec<ResidualBin>,
    /// (feature, importance) in feature order.
    pub importances: Option<Vec<(String, f64)>>,
    pub pred_days: Vec<f64>,
    pub prediction_std_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_rows: Vec<usize>,
    pub true_days: Vec<f64>,
    pub log_acres: Vec<f64>,
    pub models: Vec<ModelEvaluation>,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Score each artifact on the dataset's test split, in day units.
pub fn evaluate_artifacts(dataset: &Dataset, artifacts: &[ModelArtifact]) -> Result<EvalReport, EvalError> {
    let test = dataset.test_indices();
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let (x_test, _) = dataset.subset(&test);
    let true_days: Vec<f64> = test.iter().map(|&i| dataset.target_days[i]).collect();
    let acres_col = dataset.spec.numeric_columns.iter().position(|c| c == "log_acres");
    let log_acres = test.iter().map(|&i| acres_col.map_or(f64::NAN, |j| dataset.features.get(i, j))).collect();
    let names = dataset.spec.column_names();
    let mut models = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let pred_days: Vec<f64> = a.predict_log(&x_test)?.into_iter().map(inverse_transform).collect();
        models.push(ModelEvaluation {
            kind: a.kind,
            metrics: compute_metrics(&true_days, &pred_days)?,
            residual_bins: residual_analysis(&true_days, &pred_days),
            importances: a.importances().map(|imp| names.iter().cloned().zip(imp.iter().copied()).collect()),
            prediction_std_days: std_dev(&pred_days),
            pred_days,
        });
    }
    Ok(EvalReport { test_rows: test, true_days, log_acres, models })
}

fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn opt4(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_default()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn svg_header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">");
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(out, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>", W / 2.0, escape(title));
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", W / 2.0, H - 16.0, escape(xlabel));
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    let _ = writeln!(out, "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", H - PAD, W - PAD, H - PAD);
    let _ = writeln!(out, "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>", H - PAD);
}

/// Scatter plot with one `<circle>` per point; raw values ride along in
/// `data-x` / `data-y`.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::new();
    svg_header(&mut out, title, xlabel, ylabel);
    let (x0, x1) = span(points.iter().map(|p| p.0));
    let (y0, y1) = span(points.iter().map(|p| p.1));
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"{}\" font-size=\"10\">{}</text>", H - PAD + 14.0, fmt4(x0));
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>", W - PAD, H - PAD + 14.0, fmt4(x1));
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>", PAD - 4.0, H - PAD, fmt4(y0));
    let _ = writeln!(out, "<text x=\"{}\" y=\"{PAD}\" font-size=\"10\" text-anchor=\"end\">{}</text>", PAD - 4.0, fmt4(y1));
    let _ = writeln!(out, "<g fill=\"steelblue\" fill-opacity=\"0.6\">");
    for &(x, y) in points {
        let px = PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let py = H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
        let (px, py) = if px.is_finite() && py.is_finite() { (px, py) } else { (PAD, H - PAD) };
        let _ = writeln!(out, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" data-x=\"{x}\" data-y=\"{y}\"/>");
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Horizontal bar chart, one `<rect>` per bar.
pub fn bar_svg(title: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    svg_header(&mut out, title, "importance", "");
    let max = bars.iter().map(|b| b.1).fold(0.0_f64, f64::max).max(1e-12);
    let slot = (H - 2.0 * PAD) / bars.len().max(1) as f64;
    let left = PAD + 80.0;
    for (i, (name, v)) in bars.iter().enumerate() {
        let y = PAD + i as f64 * slot;
        let w = v / max * (W - left - PAD);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>", left - 4.0, y + slot * 0.6, escape(name));
        let _ = writeln!(
            out,
            "<rect x=\"{left}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"darkorange\" data-feature=\"{}\" data-value=\"{v}\"/>",
            slot * 0.8,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Render every report file as (name, contents).
pub fn render_report(report: &EvalReport) -> Vec<(String, String)> {
    let mut files = Vec::new();

    let mut metrics = String::from("model,mae_days,rmse_days,r2_days,prediction_std_days\n");
    for m in &report.models {
        let _ = writeln!(
            metrics,
            "{},{},{},{},{}",
            m.kind,
            fmt4(m.metrics.mae_days),
            fmt4(m.metrics.rmse_days),
            fmt4(m.metrics.r2_days),
            fmt4(m.prediction_std_days)
        );
    }
    files.push(("metrics.csv".to_string(), metrics));

    let mut bins = String::from("model,bin,lower,upper,count,mae,mean_signed_error\n");
    for m in &report.models {
        for b in &m.residual_bins {
            let upper = b.upper.map(|u| u.to_string()).unwrap_or_else(|| "inf".into());
            let _ = writeln!(bins, "{},\"{}\",{},{},{},{},{}", m.kind, b.label(), b.lower, upper, b.count, opt4(b.mae), opt4(b.mean_signed_error));
        }
    }
    files.push(("residual_bins.csv".to_string(), bins));

    let mut imp = String::from("model,feature,importance\n");
    for m in &report.models {
        for (f, v) in m.importances.iter().flatten() {
            let _ = writeln!(imp, "{},{},{v:.6}", m.kind, f);
        }
    }
    files.push(("importance.csv".to_string(), imp));

    let mut size = String::from("row,log_acres,containment_days\n");
    let mut size_points = Vec::new();
    for ((r, a), d) in report.test_rows.iter().zip(&report.log_acres).zip(&report.true_days) {
        let _ = writeln!(size, "{r},{a:.6},{d}");
        size_points.push((*a, *d));
    }
    files.push(("points_size_vs_duration.csv".to_string(), size));
    files.push((
        "size_vs_duration.svg".to_string(),
        scatter_svg("Fire size vs containment duration", "log(1 + acres)", "containment days", &size_points),
    ));

    let mut errs = String::from("model,row,true_days,pred_days,error_days\n");
    for m in &report.models {
        let mut pts = Vec::with_capacity(m.pred_days.len());
        for ((r, t), p) in report.test_rows.iter().zip(&report.true_days).zip(&m.pred_days) {
            let _ = writeln!(errs, "{},{r},{t},{p:.6},{:.6}", m.kind, p - t);
            pts.push((*t, p - t));
        }
        files.push((
            format!("error_vs_true_{}.svg", m.kind),
            scatter_svg(&format!("Prediction error ({})", m.kind), "true containment days", "predicted - true (days)", &pts),
        ));
        if let Some(imp) = &m.importances {
            files.push((format!("importance_{}.svg", m.kind), bar_svg(&format!("Feature importance ({})", m.kind), imp)));
        }
    }
    files.push(("points_error_vs_true.csv".to_string(), errs));
    files.sort();
    files
}

/// Write all report files into `dir`. Files are staged in a sibling
/// directory and moved into place only once all of them are written.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<String>, EvalError> {
    if report.true_days.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let files = render_report(report);
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;
    let written = (|| -> std::io::Result<()> {
        for (f, body) in &files {
            fs::write(staging.join(f), body)?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e.into());
    }
    Ok(files.into_iter().map(|(f, _)| f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> EvalReport {
        let true_days = vec![1.0, 12.0, 50.0];
        let pred = vec![2.0, 10.0, 30.0];
        EvalReport {
            test_rows: vec![4, 5, 6],
            log_acres: vec![1.0, 2.0, 3.0],
            models: vec![ModelEvaluation {
                kind: ModelKind::Gbt,
                metrics: compute_metrics(&true_days, &pred).unwrap(),
                residual_bins: residual_analysis(&true_days, &pred),
                importances: Some(vec![("log_acres".into(), 0.75), ("C_METHOD".into(), 0.25)]),
                prediction_std_days: std_dev(&pred),
                pred_days: pred,
            }],
            true_days,
        }
    }

    #[test]
    fn empty_test_set_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("report");
        let empty = EvalReport { test_rows: vec![], true_days: vec![], log_acres: vec![], models: vec![] };
        assert!(matches!(emit_report(&empty, &target), Err(EvalError::EmptyTestSet)));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn svg_is_well_formed_with_every_point() {
        let files = render_report(&fixture());
        for (name, body) in files.iter().filter(|(n, _)| n.ends_with(".svg")) {
            let doc = roxmltree::Document::parse(body).unwrap_or_else(|e| panic!("{name}: {e}"));
            let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
            let rects = doc.descendants().filter(|n| n.has_tag_name("rect") && n.attribute("data-value").is_some()).count();
            assert!(circles == 3 || rects == 2, "{name}");
        }
    }

    #[test]
    fn metrics_csv_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("report");
        let names = emit_report(&fixture(), &target).unwrap();
        assert!(names.contains(&"importance_gbt.svg".to_string()));
        let mut rdr = csv::Reader::from_path(target.join("metrics.csv")).unwrap();
        let headers = rdr.headers().unwrap().clone();
        let row = rdr.records().next().unwrap().unwrap();
        let mae: f64 = row[headers.iter().position(|h| h == "mae_days").unwrap()].parse().unwrap();
        assert!((mae - 23.0 / 3.0).abs() < 1e-4);
        // Re-emitting replaces the directory wholesale.
        emit_report(&fixture(), &target).unwrap();
        assert!(!dir.path().join(".report.partial").exists());
    }
}

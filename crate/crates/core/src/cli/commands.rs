use std::path::{Path, PathBuf};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::Manifest;
use super::{Cli, CliError, Command};
use crate::clean::{clean_records, descriptive_stats, parse_date, read_clean_csv, write_clean_csv, FireRecord};
use crate::eval::artifact::VALIDATION_FRACTION;
use crate::eval::{
    data_fingerprint, emit_report, evaluate_artifacts, grid_search, kfold_indices, train_model, write_atomic, EvalReport,
    GridResult, ModelArtifact, ModelKind, ModelParams,
};
use crate::features::{feature_matrix, prepare_dataset, Dataset, Standardizer};
use crate::ingest::join::is_shapefile_path;
use crate::ingest::perimeter::{csv_error, line_of, parse_code, Columns};
use crate::ingest::{join_geometry, parse_data_dictionary, parse_perimeter_csv, read_geometry_csv, read_shapefile_subset, CsvError};
use crate::lstm::{tune_lstm, TuneResult};
use crate::synth::{synth_records, DEFAULT_SYNTH_SEED};

pub const TUNING_FORMAT_VERSION: u32 = 1;

/// Result of `tune`, read back by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub format_version: u32,
    pub model: ModelKind,
    pub seed: u64,
    pub best_params: ModelParams,
    pub grid: Option<GridResult>,
    pub random_search: Option<TuneResult>,
}

struct Run {
    cfg: RunConfig,
    model: Option<ModelKind>,
    manifest: Manifest,
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))
}

fn io_internal(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

impl Run {
    fn out(&self) -> &Path {
        &self.cfg.paths.out
    }

    fn require_model(&self, what: &str) -> Result<ModelKind, CliError> {
        self.model.ok_or_else(|| CliError::User(format!("{what} needs --model rf|gbt|lstm")))
    }

    fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = read_input(path)?;
        self.manifest.add_input(path)?;
        Ok(bytes)
    }

    /// Atomic write of `bytes` to `<out>/<rel>`, recorded in the manifest.
    fn output(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out().join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_internal(parent))?;
        }
        write_atomic(&path, bytes)?;
        self.manifest.outputs.push(rel.to_string());
        Ok(path)
    }

    fn dataset(&mut self) -> Result<Dataset, CliError> {
        let path = self.cfg.cleaned_path();
        if !path.exists() {
            return Err(CliError::User(format!("no cleaned dataset at {} (run ingest or set paths.cleaned)", path.display())));
        }
        let records = read_clean_csv(&self.input(&path)?)?;
        Ok(prepare_dataset(&records, self.cfg.split_year)?)
    }

    fn model_path(&self, kind: ModelKind) -> PathBuf {
        self.out().join("models").join(format!("{kind}.json"))
    }

    /// Saved artifacts for `--model`, or every saved one in rf, gbt, lstm
    /// order.
    fn artifacts(&mut self) -> Result<Vec<ModelArtifact>, CliError> {
        let kinds = match self.model {
            Some(k) => vec![k],
            None => ModelKind::ALL.into_iter().filter(|k| self.model_path(*k).exists()).collect(),
        };
        if kinds.is_empty() {
            return Err(CliError::User(format!("no trained models under {}", self.out().join("models").display())));
        }
        let mut out = Vec::with_capacity(kinds.len());
        for k in kinds {
            let path = self.model_path(k);
            if !path.exists() {
                return Err(CliError::User(format!("no trained {k} model at {}", path.display())));
            }
            let text = String::from_utf8(self.input(&path)?).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
            out.push(ModelArtifact::from_json(&text)?);
        }
        Ok(out)
    }

    fn write_manifest(&mut self, name: &str) -> Result<(), CliError> {
        let manifest = std::mem::replace(&mut self.manifest, Manifest::new("", None, 0, 0, String::new())).finish();
        let path = self.out().join(format!("manifest_{name}.json"));
        std::fs::create_dir_all(self.out()).map_err(io_internal(self.out()))?;
        write_atomic(&path, manifest.to_json().as_bytes())?;
        Ok(())
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(y) = cli.split_year {
        cfg.split_year = y;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Execute the parsed command line; returns human-readable summary lines.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let cfg = effective_config(cli)?;
    let model = cli.model.as_deref().map(str::parse::<ModelKind>).transpose().map_err(CliError::User)?;
    let name = match &cli.command {
        Command::Ingest => "ingest",
        Command::Tune => "tune",
        Command::Train => "train",
        Command::Evaluate => "evaluate",
        Command::Predict { .. } => "predict",
        Command::Report => "report",
        Command::Synth { .. } => "synth",
    };
    let manifest = Manifest::new(name, model.map(|m| m.to_string()), cfg.seed, cfg.split_year, cfg.hash());
    let mut run = Run { cfg, model, manifest };
    let lines = match &cli.command {
        Command::Ingest => ingest(&mut run)?,
        Command::Tune => tune(&mut run)?,
        Command::Train => train(&mut run)?,
        Command::Evaluate => evaluate(&mut run)?,
        Command::Predict { input } => predict(&mut run, input)?,
        Command::Report => report(&mut run)?,
        Command::Synth { rows, output } => synth(&mut run, *rows, output.as_deref(), cli.seed)?,
    };
    let manifest_name = match (name, model) {
        ("tune" | "train", Some(m)) => format!("{name}_{m}"),
        _ => name.to_string(),
    };
    run.write_manifest(&manifest_name)?;
    Ok(lines)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    join: &'a crate::ingest::JoinReport,
    clean: &'a crate::clean::CleanReport,
}

fn ingest(run: &mut Run) -> Result<Vec<String>, CliError> {
    let need = |p: &Option<PathBuf>, key: &str| p.clone().ok_or_else(|| CliError::User(format!("ingest needs paths.{key} in the config")));
    let perimeters = need(&run.cfg.paths.perimeters, "perimeters")?;
    let geometry = need(&run.cfg.paths.geometry, "geometry")?;
    let raw = parse_perimeter_csv(&run.input(&perimeters)?)?;
    let table = if is_shapefile_path(&geometry) {
        let dbf = ["dbf", "DBF"].iter().map(|e| geometry.with_extension(e)).find(|p| p.exists());
        let dbf = dbf.ok_or_else(|| CliError::User(format!("no .dbf next to {}", geometry.display())))?;
        let shp_bytes = run.input(&geometry)?;
        read_shapefile_subset(&shp_bytes, &run.input(&dbf)?)?
    } else {
        read_geometry_csv(&run.input(&geometry)?)?
    };
    let dictionary = match run.cfg.paths.dictionary.clone() {
        Some(p) => Some(parse_data_dictionary(&run.input(&p)?)?),
        None => None,
    };
    let (joined, join_report) = join_geometry(&raw, &table);
    let (records, clean_report) = clean_records(&joined);
    let clean_report = clean_report.with_join_drops(join_report.dropped());
    let stats = descriptive_stats(&records)?;
    run.output("cleaned.csv", write_clean_csv(&records, dictionary.as_ref()).as_bytes())?;
    let summary = IngestSummary { join: &join_report, clean: &clean_report };
    let mut json = serde_json::to_string_pretty(&summary).expect("report serializes");
    json.push('\n');
    run.output("clean_report.json", json.as_bytes())?;
    run.output("stats.csv", stats.to_csv().as_bytes())?;
    let mut lines = vec![format!("ingest: {} rows in, {} rows out", clean_report.rows_in, clean_report.rows_out)];
    for (reason, n) in &clean_report.dropped_by_reason {
        let name = serde_json::to_value(reason).expect("reason serializes");
        lines.push(format!("  dropped {}: {n}", name.as_str().unwrap_or_default()));
    }
    Ok(lines)
}

fn tune(run: &mut Run) -> Result<Vec<String>, CliError> {
    let kind = run.require_model("tune")?;
    let dataset = run.dataset()?;
    let train = dataset.train_indices();
    let seed = run.cfg.seed;
    let base = run.cfg.model_params(kind);
    let (record, table) = match kind {
        ModelKind::Rf | ModelKind::Gbt => {
            let grid = run.cfg.grid(kind)?;
            let (x, y) = dataset.subset(&train);
            let plan = kfold_indices(train.len(), run.cfg.tuning.folds, seed)?;
            let result = grid_search(&base, &grid, &x, &y, &plan)?;
            let csv = result.to_csv();
            let record = TuningRecord {
                format_version: TUNING_FORMAT_VERSION,
                model: kind,
                seed,
                best_params: result.best_params.clone(),
                grid: Some(result),
                random_search: None,
            };
            (record, csv)
        }
        ModelKind::Lstm => {
            let ModelParams::Lstm(base) = base else { unreachable!("kind is lstm") };
            let spec = &dataset.spec;
            let standardizer = Standardizer::fit_rows(&dataset.features, &train, spec.n_numeric())?;
            let (fit, hold) = dataset.temporal_holdout(&train, VALIDATION_FRACTION);
            let (fx, fy) = dataset.subset(&fit);
            let (hx, hy) = dataset.subset(&hold);
            let (fx, hx) = (standardizer.apply(&fx), standardizer.apply(&hx));
            let t = &run.cfg.tuning;
            let result =
                tune_lstm(&fx, &fy, spec.n_numeric(), &spec.cardinalities(), &base, &t.lstm_space, t.lstm_trials, seed, (&hx, &hy))?;
            let mut csv = String::from("trial,units,dropout,learning_rate,seed,validation_rmse_log,best\n");
            for (i, tr) in result.trials.iter().enumerate() {
                let p = &tr.params;
                csv.push_str(&format!(
                    "{i},{},{:.6},{:.6e},{},{:.6},{}\n",
                    p.units,
                    p.dropout,
                    p.learning_rate,
                    tr.seed,
                    tr.validation_rmse,
                    i == result.best
                ));
            }
            let record = TuningRecord {
                format_version: TUNING_FORMAT_VERSION,
                model: kind,
                seed,
                best_params: ModelParams::Lstm(result.best_trial().params.clone()),
                grid: None,
                random_search: Some(result),
            };
            (record, csv)
        }
    };
    let mut json = serde_json::to_string_pretty(&record).expect("tuning record serializes");
    json.push('\n');
    run.output(&format!("tuning_{kind}.json"), json.as_bytes())?;
    run.output(&format!("tuning_{kind}.csv"), table.as_bytes())?;
    let best = serde_json::to_string(&record.best_params).expect("params serialize");
    Ok(vec![format!("tune {kind}: best {best}")])
}

fn train(run: &mut Run) -> Result<Vec<String>, CliError> {
    let kind = run.require_model("train")?;
    let dataset = run.dataset()?;
    let tuned = run.out().join(format!("tuning_{kind}.json"));
    let params = if run.cfg.train.use_tuned && tuned.exists() {
        let bytes = run.input(&tuned)?;
        let record: TuningRecord =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", tuned.display())))?;
        if record.format_version != TUNING_FORMAT_VERSION || record.model != kind {
            return Err(CliError::Data(format!("{} does not hold a {kind} tuning result", tuned.display())));
        }
        record.best_params
    } else {
        run.cfg.model_params(kind)
    };
    let artifact = train_model(&params, &dataset, run.cfg.seed)?;
    run.output(&format!("models/{kind}.json"), artifact.to_json().as_bytes())?;
    let summary = match &artifact.metrics {
        Some(m) => format!("train {kind}: test MAE {:.4} days, RMSE {:.4} days", m.mae_days, m.rmse_days),
        None => format!("train {kind}: done (test split too small to score)"),
    };
    Ok(vec![summary])
}

fn evaluate(run: &mut Run) -> Result<Vec<String>, CliError> {
    let dataset = run.dataset()?;
    let artifacts = run.artifacts()?;
    let (x_train, y_train) = dataset.subset(&dataset.train_indices());
    let fingerprint = data_fingerprint(&x_train, &y_train);
    if let Some(a) = artifacts.iter().find(|a| a.data_fingerprint != fingerprint) {
        return Err(CliError::Data(format!("the {} model was trained on different data", a.kind)));
    }
    let report = evaluate_artifacts(&dataset, &artifacts)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    run.output("evaluation.json", json.as_bytes())?;
    let files = emit_report(&report, &run.out().join("report"))?;
    run.manifest.outputs.extend(files.iter().map(|f| format!("report/{f}")));
    Ok(report
        .models
        .iter()
        .map(|m| format!("{}: MAE {:.4}  RMSE {:.4}  R2 {:.4}", m.kind, m.metrics.mae_days, m.metrics.rmse_days, m.metrics.r2_days))
        .collect())
}

fn report(run: &mut Run) -> Result<Vec<String>, CliError> {
    let path = run.out().join("evaluation.json");
    if !path.exists() {
        return Err(CliError::User(format!("no evaluation at {} (run evaluate first)", path.display())));
    }
    let bytes = run.input(&path)?;
    let report: EvalReport = serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let files = emit_report(&report, &run.out().join("report"))?;
    run.manifest.outputs.extend(files.iter().map(|f| format!("report/{f}")));
    Ok(vec![format!("report: {} files", files.len())])
}

/// Rows to score: ALARM_DATE, GIS_ACRES, LATITUDE and LONGITUDE are
/// required; the categorical columns are optional and fall back to the
/// missing-value category. A cleaned dataset is valid input.
pub fn read_prediction_rows(bytes: &[u8]) -> Result<Vec<FireRecord>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = Columns::new(&headers);
    let [alarm, acres, lat, lon] = ["ALARM_DATE", "GIS_ACRES", "LATITUDE", "LONGITUDE"].map(|c| cols.require(c));
    let (alarm, acres, lat, lon) = (alarm?, acres?, lat?, lon?);
    let opt = |c: &str| cols.find(c);
    let (cause, agency, unit, method, objective, name, irwin) =
        (opt("CAUSE"), opt("AGENCY"), opt("UNIT_ID"), opt("C_METHOD"), opt("OBJECTIVE"), opt("FIRE_NAME"), opt("IRWINID"));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = line_of(&row);
        let bad = |m: String| CliError::from(CsvError::MalformedCsv { line, message: m });
        let text = |i: Option<usize>| i.map(|i| row[i].trim()).filter(|t| !t.is_empty()).map(str::to_string);
        let code = |i: Option<usize>, c: &str| -> Result<Option<i64>, CliError> {
            i.and_then(|i| parse_code(&row[i])).transpose().map_err(|m| bad(format!("{c}: {m}")))
        };
        let real = |i: usize, c: &str| -> Result<f64, CliError> {
            row[i].trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("{c}: {:?}", &row[i])))
        };
        let alarm_date = parse_date(&row[alarm])?;
        let gis_acres = real(acres, "GIS_ACRES")?;
        if gis_acres < 0.0 {
            return Err(bad("GIS_ACRES negative".into()));
        }
        out.push(FireRecord {
            year_digitized: alarm_date.year(),
            irwin_id: text(irwin),
            fire_name: text(name).unwrap_or_default(),
            alarm_date,
            cont_date: alarm_date,
            cause_code: code(cause, "CAUSE")?,
            agency_code: text(agency),
            unit_id: text(unit),
            c_method_code: code(method, "C_METHOD")?,
            objective_code: code(objective, "OBJECTIVE")?,
            gis_acres,
            latitude: real(lat, "LATITUDE")?,
            longitude: real(lon, "LONGITUDE")?,
            containment_days: 0,
            log_cont_days: 0.0,
        });
    }
    Ok(out)
}

fn predict(run: &mut Run, input: &Path) -> Result<Vec<String>, CliError> {
    let records = read_prediction_rows(&run.input(input)?)?;
    let artifacts = run.artifacts()?;
    let mut columns = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        let x = feature_matrix(&records, &a.feature_spec)?;
        columns.push(a.predict_days(&x)?);
    }
    let mut csv = String::from("row");
    for a in &artifacts {
        csv.push_str(&format!(",{}_days", a.kind));
    }
    csv.push('\n');
    for i in 0..records.len() {
        csv.push_str(&i.to_string());
        for c in &columns {
            csv.push_str(&format!(",{:.6}", c[i]));
        }
        csv.push('\n');
    }
    run.output("predictions.csv", csv.as_bytes())?;
    Ok(vec![format!("predict: {} rows scored by {} model(s)", records.len(), artifacts.len())])
}

fn synth(run: &mut Run, rows: usize, output: Option<&Path>, seed: Option<u64>) -> Result<Vec<String>, CliError> {
    let seed = seed.unwrap_or(DEFAULT_SYNTH_SEED);
    let body = write_clean_csv(&synth_records(rows, seed), None);
    let path = match output {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io_internal(parent))?;
            }
            write_atomic(p, body.as_bytes())?;
            run.manifest.outputs.push(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            p.to_path_buf()
        }
        None => run.output("synthetic.csv", body.as_bytes())?,
    };
    run.manifest.seed = seed;
    Ok(vec![format!("synth: {rows} rows (seed {seed}) written to {}", path.display())])
}

//! End-to-end runs of the `wildfire` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn wildfire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wildfire")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wildfire(args);
    assert!(out.status.success(), "{args:?}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn no_partials(dir: &Path) {
    for entry in walkdir::WalkDir::new(dir) {
        let path = entry.unwrap().into_path();
        assert!(!path.to_string_lossy().contains(".partial"), "leftover {}", path.display());
    }
}

/// A config naming the bundled synthetic data and nothing else.
fn plain_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("plain.toml");
    std::fs::write(&cfg, format!("[paths]\ncleaned = {:?}\n", s(&fixture("synthetic_500.csv")))).unwrap();
    cfg
}

#[test]
fn ingest_fixture_keeps_seven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["--config", s(&fixture("fixture.toml")), "--out", s(dir.path()), "ingest"]);
    let cleaned = std::fs::read_to_string(dir.path().join("cleaned.csv")).unwrap();
    assert_eq!(cleaned.lines().count(), 1 + 7);
    let report = json(&dir.path().join("clean_report.json"));
    assert_eq!(report["clean"]["rows_out"], 7, "{report}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("unparseable_date"));
    let manifest = json(&dir.path().join("manifest_ingest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    no_partials(dir.path());
}

#[test]
fn default_gbt_training_uses_the_stock_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = plain_config(dir.path());
    let out = dir.path().join("out");
    ok(&["--config", s(&cfg), "--out", s(&out), "--model", "gbt", "train"]);
    let art = json(&out.join("models/gbt.json"));
    let p = &art["params"]["values"];
    assert_eq!(p["n_estimators"], 500, "{p}");
    assert_eq!(p["learning_rate"], 0.01);
    assert_eq!(p["max_depth"], 4);
    assert_eq!(p["subsample"], 0.6);
    assert_eq!(p["colsample_bytree"], 0.8);
    assert_eq!(p["gamma"], 0.4);

    // A zero-acre fire contained on its alarm date still gets a valid duration.
    let input = dir.path().join("new.csv");
    std::fs::write(&input, "ALARM_DATE,GIS_ACRES,LATITUDE,LONGITUDE,CAUSE\n2020-07-04,0,38.5,-121.2,14\n2021-08-01,5000,40.1,-122.9,1\n").unwrap();
    ok(&["--config", s(&cfg), "--out", s(&out), "predict", "--input", s(&input)]);
    let preds = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("row,gbt_days"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0), "{values:?}");
    no_partials(&out);
}

#[test]
fn run_hash_follows_config_and_input_bytes_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::copy(fixture("synthetic_500.csv"), &data).unwrap();
    let cfg = dir.path().join("c.toml");
    let write_cfg = |trees: usize| std::fs::write(&cfg, format!("[paths]\ncleaned = \"data.csv\"\n[rf]\nn_estimators = {trees}\n")).unwrap();
    let hash_of = |out: &str| {
        let out = dir.path().join(out);
        ok(&["--config", s(&cfg), "--out", s(&out), "--model", "rf", "train"]);
        json(&out.join("manifest_train_rf.json"))["run_hash"].as_str().unwrap().to_string()
    };
    write_cfg(5);
    let a = hash_of("a");
    assert_eq!(a, hash_of("b"), "out dir must not affect the hash");
    write_cfg(6);
    let c = hash_of("c");
    assert_ne!(a, c);
    write_cfg(5);
    assert_eq!(a, hash_of("d"));
    let mut bytes = std::fs::read(&data).unwrap();
    bytes.extend_from_slice(b"\n");
    std::fs::write(&data, bytes).unwrap();
    assert_ne!(a, hash_of("e"));
}

#[test]
fn usage_problems_exit_one_and_bad_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let parse = |o: &Output| -> serde_json::Value {
        let line = String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or_default().to_string();
        serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line}"))
    };

    let o = wildfire(&["--bogus", "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(parse(&o)["error"]["category"], "user");

    let o = wildfire(&["--config", s(&dir.path().join("missing.toml")), "ingest"]);
    assert_eq!(o.status.code(), Some(1));

    let o = wildfire(&["--config", s(&plain_config(dir.path())), "--threads", "0", "--model", "rf", "train"]);
    assert_eq!(o.status.code(), Some(1));

    let o = wildfire(&["--config", s(&plain_config(dir.path())), "--out", s(&dir.path().join("o")), "train"]);
    assert_eq!(o.status.code(), Some(1), "train without --model");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "FIRE_NAME,YEAR_\nX,2001\n").unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, format!("[paths]\nperimeters = {:?}\ngeometry = {:?}\n", s(&bad), s(&fixture("geometry_10.csv")))).unwrap();
    let out = dir.path().join("bad_out");
    let o = wildfire(&["--config", s(&cfg), "--out", s(&out), "ingest"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(parse(&o)["error"]["category"], "data");
    assert!(!out.join("cleaned.csv").exists());

    assert_eq!(wildfire(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["--seed", "7", "synth", "--rows", "50", "--output", s(&a)]);
    ok(&["--seed", "7", "synth", "--rows", "50", "--output", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 51);
}

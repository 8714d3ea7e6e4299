//! TOML run configuration. Every field has a default, so an empty file (or
//! no file) is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::eval::search::DEFAULT_FOLDS;
use crate::eval::{gbt_default_grid, rf_default_grid, Grid, ModelKind, ModelParams, ParamValue};
use crate::features::DEFAULT_SPLIT_YEAR;
use crate::forest::ForestParams;
use crate::gbt::GbtParams;
use crate::lstm::{LstmParams, SearchSpace, DEFAULT_TRIALS};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub perimeters: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// Geometry CSV (WKT column) or a `.shp` with its `.dbf` alongside.
    pub geometry: Option<PathBuf>,
    /// Cleaned dataset; defaults to `<out>/cleaned.csv`.
    pub cleaned: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { perimeters: None, dictionary: None, geometry: None, cleaned: None, out: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub folds: usize,
    /// Parameter name to candidate list; key order is enumeration order.
    pub rf_grid: Option<toml::Table>,
    pub gbt_grid: Option<toml::Table>,
    pub lstm_trials: usize,
    pub lstm_space: SearchSpace,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, rf_grid: None, gbt_grid: None, lstm_trials: DEFAULT_TRIALS, lstm_space: SearchSpace::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Prefer `<out>/tuning_<model>.json` over the configured parameters.
    pub use_tuned: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { use_tuned: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split_year: i32,
    pub paths: PathsConfig,
    pub rf: ForestParams,
    pub gbt: GbtParams,
    pub lstm: LstmParams,
    pub tuning: TuningConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            split_year: DEFAULT_SPLIT_YEAR,
            paths: PathsConfig::default(),
            rf: ForestParams::default(),
            gbt: GbtParams::default(),
            lstm: LstmParams::default(),
            tuning: TuningConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn table_to_grid(name: &str, table: &toml::Table) -> Result<Grid, CliError> {
    let mut params = Vec::with_capacity(table.len());
    for (key, value) in table {
        let values = value.as_array().ok_or_else(|| CliError::User(format!("{name}.{key}: expected an array of values")))?;
        let converted = values
            .iter()
            .map(|v| match v {
                toml::Value::Integer(i) => Ok(ParamValue::Int(*i)),
                toml::Value::Float(f) => Ok(ParamValue::Float(*f)),
                toml::Value::String(s) => Ok(ParamValue::Text(s.clone())),
                other => Err(CliError::User(format!("{name}.{key}: unsupported value {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        params.push((key.clone(), converted));
    }
    Ok(Grid { params })
}

impl RunConfig {
    /// Parse TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::User(format!("config: {e}")))?;
        for p in [&mut cfg.paths.perimeters, &mut cfg.paths.dictionary, &mut cfg.paths.geometry, &mut cfg.paths.cleaned] {
            resolve(base_dir, p);
        }
        if cfg.paths.out.is_relative() {
            cfg.paths.out = base_dir.join(&cfg.paths.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(1900..=2100).contains(&self.split_year) {
            return Err(CliError::User(format!("split_year {} outside 1900..=2100", self.split_year)));
        }
        if self.tuning.folds < 2 {
            return Err(CliError::User("tuning.folds must be at least 2".into()));
        }
        for p in [&self.paths.perimeters, &self.paths.dictionary, &self.paths.geometry, &self.paths.cleaned].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::User(format!("path does not exist: {}", p.display())));
            }
        }
        self.grid(ModelKind::Rf)?;
        self.grid(ModelKind::Gbt)?;
        Ok(())
    }

    pub fn cleaned_path(&self) -> PathBuf {
        self.paths.cleaned.clone().unwrap_or_else(|| self.paths.out.join("cleaned.csv"))
    }

    /// Configured parameters for `kind`, seeded with the master seed.
    pub fn model_params(&self, kind: ModelKind) -> ModelParams {
        match kind {
            ModelKind::Rf => ModelParams::Rf(self.rf),
            ModelKind::Gbt => ModelParams::Gbt(self.gbt),
            ModelKind::Lstm => ModelParams::Lstm(self.lstm.clone()),
        }
        .with_seed(self.seed)
    }

    /// Tuning grid for `kind`; the built-in grid unless one is configured.
    pub fn grid(&self, kind: ModelKind) -> Result<Grid, CliError> {
        match kind {
            ModelKind::Rf => self.tuning.rf_grid.as_ref().map_or_else(|| Ok(rf_default_grid()), |t| table_to_grid("tuning.rf_grid", t)),
            ModelKind::Gbt => self.tuning.gbt_grid.as_ref().map_or_else(|| Ok(gbt_default_grid()), |t| table_to_grid("tuning.gbt_grid", t)),
            ModelKind::Lstm => Err(CliError::User("the LSTM is tuned by random search, not a grid".into())),
        }
    }

    /// SHA-256 of the effective configuration. Paths contribute only their
    /// file names and the output directory is left out, so relocating a run
    /// does not change the hash.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        let name_only = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                *path = PathBuf::from(path.file_name().unwrap_or_default());
            }
        };
        for p in [&mut canon.paths.perimeters, &mut canon.paths.dictionary, &mut canon.paths.geometry, &mut canon.paths.cleaned] {
            name_only(p);
        }
        canon.paths.out = PathBuf::new();
        let json = serde_json::to_vec(&canon).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.split_year, 2018);
        assert_eq!(cfg.gbt, GbtParams::default());
        assert_eq!(cfg.paths.out, PathBuf::from("/base/out"));
        assert_eq!(cfg.grid(ModelKind::Rf).unwrap().n_combinations(), 432);
    }

    #[test]
    fn grids_keep_key_order_and_accept_none_depth() {
        let text = "[tuning.rf_grid]\nmin_samples_leaf = [1, 2]\nmax_depth = [4, \"none\"]\n[rf]\nmax_depth = \"none\"\n";
        let cfg = RunConfig::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(cfg.rf.max_depth, None);
        let g = cfg.grid(ModelKind::Rf).unwrap();
        assert_eq!(g.params[0].0, "min_samples_leaf");
        assert_eq!(g.params[1].1[1], ParamValue::Text("none".into()));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_years() {
        assert!(RunConfig::from_toml("sede = 1", Path::new(".")).is_err());
        let cfg = RunConfig::from_toml("split_year = 1800", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::User(_))));
    }

    #[test]
    fn hash_ignores_location_but_not_content() {
        let a = RunConfig::from_toml("[paths]\ncleaned = \"d.csv\"", Path::new("/x")).unwrap();
        let b = RunConfig::from_toml("[paths]\ncleaned = \"d.csv\"\nout = \"elsewhere\"", Path::new("/y")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml("seed = 7\n[paths]\ncleaned = \"d.csv\"", Path::new("/x")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}

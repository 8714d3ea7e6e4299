//! The `wildfire` command line.
//!
//! One subcommand per process. Outputs go under the output directory and
//! every run leaves a `manifest_<subcommand>[_<model>].json` there. Errors
//! print a single JSON line on stderr and map to exit codes 1 (user or
//! config), 2 (data) and 3 (internal).

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::clean::CleanError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::ingest::{CsvError, DictionaryError, ShapefileError};
use crate::lstm::LstmError;

pub use commands::{read_prediction_rows, TuningRecord};
pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "wildfire", version, about = "Wildfire containment-duration modeling pipeline")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// First alarm year of the test split.
    #[arg(long, global = true, value_name = "Y")]
    pub split_year: Option<i32>,
    /// rf, gbt or lstm.
    #[arg(long, global = true, value_name = "NAME")]
    pub model: Option<String>,
    /// Output directory, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Join, clean and summarize the raw sources.
    Ingest,
    /// Cross-validated grid search (rf, gbt) or random search (lstm).
    Tune,
    /// Fit one model on the training split.
    Train,
    /// Score all saved models on the test split and write the report.
    Evaluate,
    /// Day-unit predictions for new rows.
    Predict {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
    },
    /// Rewrite the report directory from a saved evaluation.
    Report,
    /// Write a synthetic cleaned dataset.
    Synth {
        #[arg(long, default_value_t = 500)]
        rows: usize,
        /// Defaults to `<out>/synthetic.csv`.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::User(_) => "user",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "category": self.category(), "message": self.to_string() } }).to_string()
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(CleanError, CsvError, FeatureError, DictionaryError, ShapefileError, LstmError);

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadParam { .. } | EvalError::EmptyGrid => CliError::User(e.to_string()),
            EvalError::LengthMismatch { .. } => CliError::Internal(e.to_string()),
            EvalError::Io(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", CliError::User(e.kind().to_string()).to_json());
            return 1;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::User("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::run(&cli)),
            Err(e) => Err(CliError::Internal(format!("thread pool: {e}"))),
        },
        None => commands::run(&cli),
    };
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

//! Config-driven experiment runner over `wslab-core`.
//!
//! A run reads one [`config::ExperimentConfig`], executes its suite and writes
//! `summary.json`, `details.csv` and any plot CSVs into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod generate;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::ExperimentConfig;
pub use report::SuiteReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] wslab_core::Error),
}

impl CliError {
    /// 2 for unusable input or output, 1 when the suite itself failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

/// Run the configured suite and write its report under `out` (or the
/// configured directory, or `wslab-out`). Returns the report and the summary path.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(SuiteReport, PathBuf), CliError> {
    let dir =
        out.map(Path::to_path_buf).or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("wslab-out"));
    let report = suites::run_suite(cfg)?;
    let summary = report::emit(cfg, &report, &dir)?;
    Ok((report, summary))
}

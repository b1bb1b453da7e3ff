//! Suite reports and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// A header plus rows, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Shortest round-trip decimal form, so CSVs are deterministic and lossless.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub instances: usize,
    pub violations: usize,
    pub metrics: Map<String, Value>,
    pub details: Table,
    /// Plot files by name.
    pub plots: Vec<(&'static str, Table)>,
    /// Extra JSON artifacts by file name.
    pub artifacts: Vec<(&'static str, Value)>,
}

impl SuiteReport {
    pub fn new(details: Table) -> Self {
        SuiteReport {
            instances: 0,
            violations: 0,
            metrics: Map::new(),
            details,
            plots: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, v: impl Serialize) {
        self.metrics.insert(name.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    version: u32,
    name: Option<&'a str>,
    kind: &'static str,
    seed: u64,
    status: &'static str,
    instances: usize,
    violations: usize,
    tolerances: Map<String, Value>,
    metrics: &'a Map<String, Value>,
    files: Vec<String>,
}

/// Write `summary.json`, `details.csv` and the plot files; returns the summary path.
pub fn emit(cfg: &ExperimentConfig, report: &SuiteReport, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = vec!["details.csv".to_string()];
    report.details.write(&dir.join("details.csv"))?;
    for (name, table) in &report.plots {
        table.write(&dir.join(name))?;
        files.push(name.to_string());
    }
    for (name, value) in &report.artifacts {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(dir.join(name), text).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        files.push(name.to_string());
    }
    let tolerances =
        cfg.suite.default_tolerances().iter().map(|(n, _)| (n.to_string(), Value::from(cfg.tol(n)))).collect();
    let summary = Summary {
        version: crate::config::SCHEMA_VERSION,
        name: cfg.name.as_deref(),
        kind: cfg.suite.kind(),
        seed: cfg.seed,
        status: if report.violations == 0 { "pass" } else { "fail" },
        instances: report.instances,
        violations: report.violations,
        tolerances,
        metrics: &report.metrics,
        files,
    };
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curves.csv");
        Table::new(&["k", "G_k", "F", "stderr"]).write(&p).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "k,G_k,F,stderr\n");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e10] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}

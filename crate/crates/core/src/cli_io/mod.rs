//! Configuration, file formats and the experiment runner behind the
//! `sivtherm` command.

pub mod config;
pub mod experiments;
pub mod spectrum_io;
pub mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentKind, RunConfig};
pub use experiments::{execute, Check, ExperimentOutput};
pub use spectrum_io::{export_spectrum, import_spectrum, parse_spectrum_csv, spectrum_to_csv};
pub use table::Table;

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SIVTHERM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "sivtherm-out";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub file: String,
    pub columns: Vec<String>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// The fully resolved configuration, defaults included.
    pub config: RunConfig,
    pub tables: Vec<TableEntry>,
    pub files: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Output directory: explicit choice, then the config, then the environment.
pub fn resolve_output_dir(explicit: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Run the experiment named in `cfg` and write its tables, extra files and
/// report into `out_dir`.
pub fn run_config(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    let kind = cfg
        .experiment
        .ok_or_else(|| Error::Config("no experiment selected".into()))?;
    let started = Instant::now();
    let output = execute(kind, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut tables = Vec::with_capacity(output.tables.len());
    for t in &output.tables {
        t.write(out_dir)?;
        tables.push(TableEntry {
            name: t.name.clone(),
            file: t.file_name(),
            columns: t.columns.clone(),
            n_rows: t.rows.len(),
        });
    }
    let mut files = Vec::new();
    for (name, contents) in &output.files {
        std::fs::write(out_dir.join(name), contents)?;
        files.push(name.clone());
    }
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: kind,
        seed: cfg.seed,
        config: cfg.clone(),
        tables,
        files,
        summary: output.summary,
        checks: output.checks,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out_dir.join(REPORT_FILE), json + "\n")?;
    Ok(report)
}

/// Load a configuration file and run it.
pub fn run(config_path: &Path) -> Result<RunReport> {
    let cfg = RunConfig::load(config_path)?;
    let out = resolve_output_dir(None, &cfg);
    run_config(&cfg, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_output_dir_wins() {
        let mut cfg = RunConfig::new(ExperimentKind::Fit);
        cfg.output_dir = Some(PathBuf::from("from-config"));
        assert_eq!(resolve_output_dir(Some(Path::new("cli")), &cfg), PathBuf::from("cli"));
        assert_eq!(resolve_output_dir(None, &cfg), PathBuf::from("from-config"));
    }

    #[test]
    fn missing_experiment_is_config_error() {
        let mut cfg = RunConfig::new(ExperimentKind::Fit);
        cfg.experiment = None;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_config(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn fit_run_writes_labelled_tables() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(ExperimentKind::Fit);
        cfg.seed = 3;
        let report = run_config(&cfg, dir.path()).unwrap();
        assert!(dir.path().join("fit.csv").exists());
        assert!(dir.path().join("spectrum.csv").exists());
        assert!(dir.path().join(REPORT_FILE).exists());
        let t = report.summary["temperature_K"];
        assert!((t - 295.0).abs() < 1.0, "{t}");
    }
}

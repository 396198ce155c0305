//! Run orchestration and report files.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::suites::{run_suite, Context, SuiteResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub grw_core: &'static str,
    pub grw_cli: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            grw_core: grw_core::VERSION,
            grw_cli: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Wall-clock seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub total: f64,
    pub suites: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub versions: Versions,
    pub suites: Vec<SuiteResult>,
    /// Conjunction of the suite verdicts.
    pub passed: bool,
    /// `"<suite>: <message>"` for every failure.
    pub failures: Vec<String>,
    /// Kept last: the only part of a report that varies between identical runs.
    pub timings: Timings,
}

pub fn run(cfg: &RunConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = Context::new(cfg).map_err(|e| ConfigError::invalid("fiber", e))?;
    let mut suites = Vec::new();
    let mut timings = BTreeMap::new();
    for &suite in &cfg.suites {
        log::info!("running suite {suite}");
        let t = Instant::now();
        let result = run_suite(suite, &ctx);
        timings.insert(suite.name().to_string(), t.elapsed().as_secs_f64());
        log::info!("suite {suite}: {}", if result.passed { "pass" } else { "FAIL" });
        suites.push(result);
    }
    let failures: Vec<String> = suites
        .iter()
        .flat_map(|s| s.failures.iter().map(move |f| format!("{}: {f}", s.suite)))
        .collect();
    Ok(RunReport {
        config: cfg.clone(),
        versions: Versions::default(),
        passed: suites.iter().all(|s| s.passed),
        suites,
        failures,
        timings: Timings {
            total: start.elapsed().as_secs_f64(),
            suites: timings,
        },
    })
}

/// Writes `report.json` and every suite table into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)? + "\n")?;
    written.push(path);
    for table in report.suites.iter().flat_map(|s| &s.tables) {
        let path = dir.join(&table.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Checks that `dir` can be created and written to.
pub fn ensure_writable(dir: &Path) -> Result<(), ConfigError> {
    let err = |e: io::Error| ConfigError::invalid("output_dir", format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write-check");
    fs::write(&probe, b"").map_err(err)?;
    fs::remove_file(&probe).map_err(err)
}

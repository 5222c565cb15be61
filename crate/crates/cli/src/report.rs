//! Versioned JSON report and the text summary printed to stdout.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// An assertion declared before the experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub id: &'static str,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: &'static str,
    pub passed: bool,
    pub observed: String,
}

impl Check {
    pub fn new(id: &'static str, passed: bool, observed: impl Into<String>) -> Self {
        Self {
            id,
            passed,
            observed: observed.into(),
        }
    }
}

/// A CSV or JSON file produced by an experiment, held in memory until the
/// run has finished.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Report layout: header (identity and declared assertions) first, then
/// the resolved parameters, results and check outcomes.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub seed: u64,
    pub quick: bool,
    pub threshold: f64,
    pub assertions: Vec<Assertion>,
    pub parameters: Value,
    pub results: Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl Report {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.id.len()).max().unwrap_or(0);
        let mut out = format!(
            "{} (seed {}{})\n",
            self.experiment,
            self.seed,
            if self.quick { ", quick" } else { "" }
        );
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out += &format!("  {:<width$}  {mark}  {}\n", c.id, c.observed);
        }
        out += &format!(
            "  {:<width$}  {}\n",
            "overall",
            if self.passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Writes the artifacts and `report.json` into `dir`, creating it if needed.
pub fn write_all(dir: &Path, report: &Report, artifacts: &[Artifact]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes).map_err(io)?;
    }
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()?).map_err(io)?;
    Ok(path)
}

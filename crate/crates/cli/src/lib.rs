//! Config-driven experiment runner behind the `tclab` binary.
//!
//! One JSON config names one experiment. The runner validates the whole
//! config before doing any work, runs the experiment, then writes a
//! versioned `report.json` and the CSV artifacts into the output directory.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Display;
use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    NonConvergence(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<tclab_core::Error> for CliError {
    fn from(e: tclab_core::Error) -> Self {
        use tclab_core::Error as E;
        match e {
            E::NotConverged { .. } | E::NoSaturation | E::UnderResolved { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            E::InvalidParameter(_) | E::Unstable(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    RuntimeError,
    ConfigError,
    AssertionFailed,
    NonConvergence,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Passed => 0,
            Status::RuntimeError => 1,
            Status::ConfigError => 2,
            Status::AssertionFailed => 3,
            Status::NonConvergence => 4,
        }
    }

    pub fn of_error(e: &CliError) -> Self {
        match e {
            CliError::Config(_) => Status::ConfigError,
            CliError::NonConvergence(_) => Status::NonConvergence,
            CliError::Runtime(_) => Status::RuntimeError,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quick: bool,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub report_path: PathBuf,
}

impl RunOutput {
    pub fn status(&self) -> Status {
        if self.report.passed {
            Status::Passed
        } else {
            Status::AssertionFailed
        }
    }
}

/// Validates, runs and writes one experiment. Nothing is written unless the
/// experiment ran to completion.
pub fn run(mut config: ExperimentConfig, overrides: &Overrides) -> Result<RunOutput, CliError> {
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set out_dir".into()))?;
    let ctx = experiments::Ctx::new(&config, overrides.quick)?;
    let plan = experiments::prepare(&config, &ctx)?;
    let assertions = plan.assertions(ctx.threshold);
    let outcome = plan.run(&ctx)?;

    for c in &outcome.checks {
        debug_assert!(assertions.iter().any(|a| a.id == c.id), "undeclared check {}", c.id);
    }
    let missing: Vec<_> = assertions
        .iter()
        .filter(|a| !outcome.checks.iter().any(|c| c.id == a.id))
        .map(|a| a.id)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Runtime(format!(
            "declared assertions without a check: {missing:?}"
        )));
    }
    let passed = outcome.checks.iter().all(|c| c.passed);
    let report = Report {
        schema_version: report::SCHEMA_VERSION,
        experiment: config.experiment.name(),
        seed: config.seed,
        quick: overrides.quick,
        threshold: ctx.threshold,
        assertions,
        parameters: plan.parameters(),
        results: outcome.results,
        checks: outcome.checks,
        artifacts: outcome.artifacts.iter().map(|a| a.name.clone()).collect(),
        passed,
    };
    let report_path = report::write_all(&out_dir, &report, &outcome.artifacts)?;
    Ok(RunOutput { report, report_path })
}

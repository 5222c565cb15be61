//! The named experiments. Each one resolves its parameters from the config
//! (`prepare`), declares its assertions, and runs.

use serde::Serialize;
use serde_json::Value;
use tclab_core::dp::{
    estimate_wbar, extract_policy, solve_value_function, ExtractConfig, ExtractedPolicy, SolverConfig, ValueGrid,
    WbarEstimate, DEFAULT_ETA,
};
use tclab_core::{CostSpec, MarketModel};

use crate::config::{Experiment, ExperimentConfig};
use crate::report::{Artifact, Assertion, Check};
use crate::CliError;

mod dp;
mod frictionless;
mod poisson;
mod selffinancing;
mod sticky;

/// Default two-sided z threshold, and the relaxed one for `--quick`.
pub const Z_FULL: f64 = 3.0;
pub const Z_QUICK: f64 = 5.0;

/// Run-wide settings shared by every experiment.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub seed: u64,
    pub quick: bool,
    pub threshold: f64,
    pub costs: CostSpec,
}

impl Ctx {
    pub fn new(config: &ExperimentConfig, quick: bool) -> Result<Self, CliError> {
        let threshold = config.params.threshold.unwrap_or(if quick { Z_QUICK } else { Z_FULL });
        if !(threshold > 0.0) {
            return Err(CliError::Config(format!("threshold must be positive, got {threshold}")));
        }
        Ok(Self {
            seed: config.seed,
            quick,
            threshold,
            costs: config.cost_spec()?,
        })
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

pub trait Plan {
    fn parameters(&self) -> Value;
    fn assertions(&self, threshold: f64) -> Vec<Assertion>;
    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError>;
}

pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Box<dyn Plan>, CliError> {
    Ok(match config.experiment {
        Experiment::PoissonDuality => Box::new(poisson::Duality::prepare(config, ctx)?),
        Experiment::PoissonLeverageScan => Box::new(poisson::LeverageScan::prepare(config, ctx)?),
        Experiment::BrownianDual => Box::new(frictionless::BrownianDual::prepare(config, ctx)?),
        Experiment::ValueFunction => Box::new(dp::ValueFunction::prepare(config, ctx)?),
        Experiment::Wbar => Box::new(dp::Wbar::prepare(config, ctx)?),
        Experiment::DppCheck => Box::new(dp::DppCheck::prepare(config, ctx)?),
        Experiment::Stickiness => Box::new(sticky::Stickiness::prepare(config, ctx)?),
        Experiment::NoShadowPrice => Box::new(frictionless::NoShadowPrice::prepare(config, ctx)?),
        Experiment::Nupbr => Box::new(frictionless::Nupbr::prepare(config, ctx)?),
        Experiment::SelffinancingSuite => Box::new(selffinancing::Suite::prepare(config, ctx)?),
    })
}

pub(crate) fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("plain data serializes")
}

pub(crate) fn assertion(id: &'static str, statement: impl Into<String>) -> Assertion {
    Assertion {
        id,
        statement: statement.into(),
    }
}

/// Sample count: the config value if given, otherwise the full default.
/// `--quick` caps either at the quick default.
pub(crate) fn sample_count(given: Option<usize>, full: usize, quick: usize, ctx: &Ctx) -> Result<usize, CliError> {
    let n = given.unwrap_or(full);
    let n = if ctx.quick { n.min(quick) } else { n };
    if n < 2 {
        return Err(CliError::Config(format!("need at least 2 samples, got {n}")));
    }
    Ok(n)
}

/// The configured market, which must be of the kind the experiment needs
/// (`want` is "brownian" or "poisson"), or `default` when absent.
pub(crate) fn market(
    config: &ExperimentConfig,
    want: Option<&str>,
    default: MarketModel,
) -> Result<MarketModel, CliError> {
    let Some(m) = config.market else {
        return Ok(default);
    };
    let built = m.build()?;
    let kind = match built {
        MarketModel::Brownian(_) => "brownian",
        MarketModel::Poisson(_) => "poisson",
    };
    if let Some(w) = want {
        if w != kind {
            return Err(CliError::Config(format!(
                "{} needs a {w} market, got {kind}",
                config.experiment.name()
            )));
        }
    }
    Ok(built)
}

/// Solver settings: the configured ones, otherwise the library defaults.
/// `--quick` coarsens either: `dl`, `dw` doubled and `dt` quadrupled, which
/// preserves `dw/√dt`.
pub(crate) fn solver(config: &ExperimentConfig, ctx: &Ctx) -> Result<SolverConfig, CliError> {
    let base = config.solver.unwrap_or_default();
    let s = if ctx.quick {
        SolverConfig {
            dl: 2.0 * base.dl,
            dw: 2.0 * base.dw,
            dt: 4.0 * base.dt,
            ..base
        }
    } else {
        base
    };
    s.validate().map_err(CliError::config)?;
    Ok(s)
}

pub(crate) struct Solved {
    pub grid: ValueGrid,
    pub policy: ExtractedPolicy,
    pub wbar: WbarEstimate,
}

pub(crate) fn solve(costs: &CostSpec, config: &SolverConfig) -> Result<Solved, CliError> {
    let grid = solve_value_function(costs, config)?;
    let policy = extract_policy(&grid, costs, &ExtractConfig::default())?;
    let wbar = estimate_wbar(&policy.policy, costs, DEFAULT_ETA)?;
    Ok(Solved { grid, policy, wbar })
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn increasing_times(times: &[f64]) -> Result<(), CliError> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(CliError::Config(
            "times must be non-empty, non-negative and increasing".into(),
        ));
    }
    Ok(())
}

/// CSV table from a header and rows of numbers; floats use the shortest
/// round-trip representation.
pub(crate) fn csv_table(name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<Artifact, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

pub(crate) fn json_artifact<T: Serialize>(name: &str, t: &T) -> Result<Artifact, CliError> {
    let mut bytes = serde_json::to_vec_pretty(t).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

/// `<stem>.csv` plus its JSON envelope for a path and optional strategy.
pub(crate) fn path_artifacts(
    stem: &str,
    path: &tclab_core::SamplePath,
    strategy: Option<&tclab_core::StrategyPath>,
    costs: &CostSpec,
) -> Result<Vec<Artifact>, CliError> {
    let mut bytes = Vec::new();
    let env = tclab_core::io::write_path_csv(&mut bytes, path, strategy, costs)?;
    Ok(vec![
        Artifact {
            name: format!("{stem}.csv"),
            bytes,
        },
        json_artifact(&format!("{stem}.json"), &env)?,
    ])
}

pub(crate) fn policy_artifact(name: &str, policy: &tclab_core::LeveragePolicy) -> Result<Artifact, CliError> {
    let mut bytes = Vec::new();
    tclab_core::io::write_policy_csv(&mut bytes, policy)?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tclab_core::dp::StopRule;
use tclab_core::{BrownianMarketSpec, CostSpec, MarketModel, PoissonMarketSpec, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PoissonDuality,
    PoissonLeverageScan,
    BrownianDual,
    ValueFunction,
    Wbar,
    DppCheck,
    Stickiness,
    NoShadowPrice,
    Nupbr,
    SelffinancingSuite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::PoissonDuality => "poisson-duality",
            Experiment::PoissonLeverageScan => "poisson-leverage-scan",
            Experiment::BrownianDual => "brownian-dual",
            Experiment::ValueFunction => "value-function",
            Experiment::Wbar => "wbar",
            Experiment::DppCheck => "dpp-check",
            Experiment::Stickiness => "stickiness",
            Experiment::NoShadowPrice => "no-shadow-price",
            Experiment::Nupbr => "nupbr",
            Experiment::SelffinancingSuite => "selffinancing-suite",
        }
    }
}

/// Market section; omitted fields take the library defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarketConfig {
    Brownian {
        w: f64,
        #[serde(default = "default_brownian_dt")]
        dt: f64,
        #[serde(default)]
        t_cap: Option<f64>,
        #[serde(default)]
        bridge_correction: bool,
    },
    Poisson {
        alpha: f64,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        horizon: f64,
    },
}

fn default_brownian_dt() -> f64 {
    1e-3
}

impl MarketConfig {
    pub fn build(&self) -> Result<MarketModel, CliError> {
        Ok(match *self {
            MarketConfig::Brownian {
                w,
                dt,
                t_cap,
                bridge_correction,
            } => {
                let mut spec = BrownianMarketSpec::new(w, dt).map_err(CliError::config)?;
                if let Some(t) = t_cap {
                    spec = spec.with_t_cap(t).map_err(CliError::config)?;
                }
                MarketModel::Brownian(spec.with_bridge_correction(bridge_correction))
            }
            MarketConfig::Poisson { alpha, dt, horizon } => {
                let spec = PoissonMarketSpec::new(alpha).map_err(CliError::config)?;
                let dt = dt.unwrap_or(spec.dt);
                MarketModel::Poisson(spec.with_grid(dt, horizon).map_err(CliError::config)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub lambda: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { lambda: 0.5 }
    }
}

/// Monte-Carlo sizes. `n` is the sample count of the main estimate, `paths`
/// the number of full grid paths for pathwise checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Samples {
    pub n: Option<usize>,
    pub paths: Option<usize>,
}

/// Experiment parameters; each experiment reads the ones it needs and
/// fills the rest from its defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub x: Option<f64>,
    pub ells: Option<Vec<f64>>,
    pub times: Option<Vec<f64>>,
    pub wbar: Option<f64>,
    pub l0: Option<f64>,
    pub w0: Option<f64>,
    pub stops: Option<Vec<StopRule>>,
    pub allowance: Option<f64>,
    pub epsilon: Option<f64>,
    pub s: Option<f64>,
    pub distance: Option<f64>,
    pub c_list: Option<Vec<f64>>,
    pub h_list: Option<Vec<f64>>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub market: Option<MarketConfig>,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    pub fn cost_spec(&self) -> Result<CostSpec, CliError> {
        CostSpec::new(self.costs.lambda).map_err(CliError::config)
    }
}

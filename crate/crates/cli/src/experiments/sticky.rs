//! Stickiness: the price stays in a relative corridor forever with
//! positive conditional probability.

use serde::Serialize;
use serde_json::{json, Value};
use tclab_core::markets::stickiness_probability;
use tclab_core::{BrownianMarketSpec, PoissonMarketSpec};

use super::*;

#[derive(Debug, Serialize)]
pub struct Stickiness {
    pub market: MarketModel,
    pub epsilon: f64,
    pub s: f64,
    pub n: usize,
}

impl Stickiness {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let default = MarketModel::Poisson(PoissonMarketSpec::new(1.0)?);
        let market = market(config, None, default)?;
        let (full, quick) = match market {
            MarketModel::Poisson(_) => (1_000_000, 20_000),
            MarketModel::Brownian(_) => (100_000, 5_000),
        };
        let s = config.params.s.unwrap_or(1.0);
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Config(format!(
                "conditioning time must be non-negative, got {s}"
            )));
        }
        Ok(Self {
            market,
            epsilon: positive("epsilon", config.params.epsilon.unwrap_or(0.1))?,
            s,
            n: sample_count(config.samples.n, full, quick, ctx)?,
        })
    }

    /// `1 - (1 + ε)^(-α)` for the Poisson market; no closed form otherwise.
    fn exact(&self) -> Option<f64> {
        match self.market {
            MarketModel::Poisson(p) => Some(1.0 - (1.0 + self.epsilon).powf(-p.alpha)),
            MarketModel::Brownian(BrownianMarketSpec { .. }) => None,
        }
    }
}

impl Plan for Stickiness {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, thr: f64) -> Vec<Assertion> {
        let mut a = vec![assertion(
            "positive",
            format!("P[S stays in [S_s/(1+ε), (1+ε) S_s] after s | tau > s] > {thr} SE"),
        )];
        if self.exact().is_some() {
            a.push(assertion(
                "closed-form",
                format!("|estimate - (1 - (1+ε)^(-α))| < {thr} SE"),
            ));
        }
        a
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let thr = ctx.threshold;
        let p = stickiness_probability(&self.market, self.epsilon, self.s, self.n, ctx.seed)?;
        let mut checks = vec![Check::new(
            "positive",
            p.mean > thr * p.std_err,
            format!("{:.5} ± {:.5} on {} survivors", p.mean, p.std_err, p.n),
        )];
        if let Some(exact) = self.exact() {
            let z = p.z_against(exact);
            checks.push(Check::new(
                "closed-form",
                z.abs() < thr,
                format!("vs {exact:.5}, z {z:+.2}"),
            ));
        }
        Ok(Outcome {
            results: json!({ "estimate": p, "closed_form": self.exact() }),
            checks,
            artifacts: Vec::new(),
        })
    }
}

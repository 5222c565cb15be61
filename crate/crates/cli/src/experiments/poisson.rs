//! Poisson market: duality gap, first-order condition and the leverage scan.

use serde::Serialize;
use serde_json::{json, Value};
use tclab_core::duality::{
    martingale_mean_test, poisson_dual_value, poisson_duality_report, poisson_primal_value, poisson_z0_samples,
};
use tclab_core::markets::sample_poisson_market;
use tclab_core::mc::{stream_rng, z_score};
use tclab_core::strategies::{constant_leverage_strategy, expected_log_utility_mc, poisson_optimal_leverage};
use tclab_core::{MarketModel, PoissonMarketSpec, StrategyFactory};

use super::*;

/// Stream index reserved for the single exported sample path.
const EXPORT_STREAM: u64 = u64::MAX;

fn poisson_spec(config: &ExperimentConfig, ctx: &Ctx) -> Result<PoissonMarketSpec, CliError> {
    let default = MarketModel::Poisson(PoissonMarketSpec::new(1.0)?);
    let MarketModel::Poisson(spec) = market(config, Some("poisson"), default)? else {
        unreachable!("kind checked")
    };
    // The dual optimizer needs αλ < 1.
    poisson_dual_value(spec.alpha, &ctx.costs, 1.0).map_err(CliError::config)?;
    Ok(spec)
}

#[derive(Debug, Serialize)]
pub struct Duality {
    pub market: PoissonMarketSpec,
    pub lambda: f64,
    pub x: f64,
    pub n: usize,
    pub times: Vec<f64>,
}

impl Duality {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let p = &config.params;
        let times = p.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        increasing_times(&times)?;
        Ok(Self {
            market: poisson_spec(config, ctx)?,
            lambda: ctx.costs.lambda(),
            x: positive("x", p.x.unwrap_or(1.0))?,
            n: sample_count(config.samples.n, 1_000_000, 20_000, ctx)?,
            times,
        })
    }
}

impl Plan for Duality {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, thr: f64) -> Vec<Assertion> {
        vec![
            assertion(
                "duality-gap",
                format!("|E[ln V_tau] - (v(y) + x y)| < {thr} SE at y = 1/x, constant leverage at the optimum"),
            ),
            assertion(
                "first-order-condition",
                "max |1/V_tau - y Z0_tau| / (y Z0_tau) < 1e-10 over the full-path sample",
            ),
            assertion("dual-product", format!("|E[V_tau y Z0_tau] - x y| < {thr} SE")),
            assertion(
                "z0-martingale",
                format!("|E[Z0_(t ∧ tau)] - 1| < {thr} SE at every listed t"),
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let thr = ctx.threshold;
        let costs = &ctx.costs;
        let r = poisson_duality_report(&self.market, costs, self.x, self.n, ctx.seed)?;
        let z = poisson_z0_samples(self.market.alpha, costs, &self.times, self.n, ctx.seed ^ 0x2a)?;
        let m = martingale_mean_test(&self.times, &z, 1.0, thr)?;
        let xy = self.x * r.y;
        let product_z = z_score(r.product_mean - xy, r.product_se);

        let checks = vec![
            Check::new(
                "duality-gap",
                r.gap_z.abs() < thr,
                format!("gap {:+.3e}, z {:+.2}", r.gap, r.gap_z),
            ),
            Check::new(
                "first-order-condition",
                r.foc_max_rel_err < 1e-10,
                format!("{:.1e} on {} paths", r.foc_max_rel_err, r.foc_paths),
            ),
            Check::new(
                "dual-product",
                product_z.abs() < thr,
                format!("{:.5} vs {xy}, z {product_z:+.2}", r.product_mean),
            ),
            Check::new(
                "z0-martingale",
                m.passed,
                m.rows
                    .iter()
                    .map(|row| format!("t={} z={:+.2}", row.t, row.z))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
        ];

        let mut rng = stream_rng(ctx.seed, EXPORT_STREAM);
        let path = sample_poisson_market(&self.market, &mut rng)?;
        let strategy = constant_leverage_strategy(self.x, r.ell_hat, &path, costs)?;
        Ok(Outcome {
            results: json!({ "duality": r, "z0_martingale": m }),
            checks,
            artifacts: path_artifacts("path", &path, Some(&strategy), costs)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct LeverageScan {
    pub market: PoissonMarketSpec,
    pub lambda: f64,
    pub x: f64,
    pub n: usize,
    pub ells: Vec<f64>,
}

impl LeverageScan {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let cap = ctx.costs.max_leverage();
        let ells = match &config.params.ells {
            Some(v) => v.clone(),
            None => {
                let steps = (cap / 0.05).round() as usize;
                (0..=steps).map(|k| (k as f64 * 0.05).min(cap)).collect()
            }
        };
        if ells.len() < 2 || ells.windows(2).any(|p| !(p[1] > p[0])) || ells[0] < 0.0 || ells[ells.len() - 1] > cap {
            return Err(CliError::Config(format!(
                "ells must be increasing, at least two, inside [0, {cap}]"
            )));
        }
        Ok(Self {
            market: poisson_spec(config, ctx)?,
            lambda: ctx.costs.lambda(),
            x: positive("x", config.params.x.unwrap_or(1.0))?,
            n: sample_count(config.samples.n, 100_000, 5_000, ctx)?,
            ells,
        })
    }

    fn max_gap(&self) -> f64 {
        self.ells.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max)
    }
}

impl Plan for LeverageScan {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, thr: f64) -> Vec<Assertion> {
        vec![
            assertion(
                "closed-form-agreement",
                format!("|MC - f(ℓ)| < {thr} SE for every scanned ℓ with finite utility"),
            ),
            assertion(
                "argmax",
                format!(
                    "MC argmax over the scan within {} of the optimal leverage",
                    self.max_gap()
                ),
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let costs = &ctx.costs;
        let model = MarketModel::Poisson(self.market);
        let ell_hat = poisson_optimal_leverage(self.market.alpha, costs)?;
        let mut rows = Vec::with_capacity(self.ells.len());
        let mut worst_z: f64 = 0.0;
        let mut agree = true;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for &ell in &self.ells {
            let e = expected_log_utility_mc(
                &StrategyFactory::ConstantLeverage { ell },
                &model,
                self.x,
                costs,
                self.n,
                ctx.seed,
            )?;
            let f = poisson_primal_value(self.market.alpha, costs, self.x, ell);
            let z = if e.is_finite() { e.z_against(f) } else { 0.0 };
            if e.is_finite() {
                worst_z = worst_z.max(z.abs());
                agree &= z.abs() < ctx.threshold;
            } else {
                agree &= f == f64::NEG_INFINITY;
            }
            if e.mean > best.0 {
                best = (e.mean, ell);
            }
            rows.push(vec![ell, e.mean, e.std_err, f, z]);
        }
        let argmax_ok = (best.1 - ell_hat).abs() <= self.max_gap() + 1e-12;
        let checks = vec![
            Check::new("closed-form-agreement", agree, format!("max |z| {worst_z:.2}")),
            Check::new(
                "argmax",
                argmax_ok,
                format!("argmax {:.4} (utility {:.5}) vs optimum {ell_hat:.4}", best.1, best.0),
            ),
        ];
        let results = json!({
            "ell_hat": ell_hat,
            "f_ell_hat": poisson_primal_value(self.market.alpha, costs, self.x, ell_hat),
            "argmax": best.1,
            "rows": rows.iter().map(|r| json!({"ell": r[0], "mean": r[1], "std_err": r[2], "closed_form": r[3], "z": r[4]})).collect::<Vec<_>>(),
        });
        Ok(Outcome {
            results,
            checks,
            artifacts: vec![csv_table(
                "scan.csv",
                &["ell", "mean", "std_err", "closed_form", "z"],
                &rows,
            )?],
        })
    }
}

//! Brownian market: the dual optimizer up to the threshold, and the two
//! frictionless demonstrations (no shadow price, no NUPBR).

use serde::Serialize;
use serde_json::{json, Value};
use tclab_core::duality::{
    brownian_dual_deflator, cps_corridor_check, deflated_values, first_passage_index, nupbr_violation_demo,
    unbounded_profit_demo,
};
use tclab_core::markets::sample_brownian_market;
use tclab_core::mc::{self, McRng};
use tclab_core::strategies::constant_leverage_strategy;
use tclab_core::BrownianMarketSpec;

use super::*;

#[derive(Debug, Serialize)]
pub struct BrownianDual {
    pub lambda: f64,
    pub x: f64,
    /// Threshold from the config, or `null` when it comes from a DP solve.
    pub wbar: Option<f64>,
    pub solver: Option<SolverConfig>,
    /// Start level; `null` means `wbar + 1`.
    pub w0: Option<f64>,
    pub dt: f64,
    pub bridge_correction: bool,
    pub paths: usize,
    pub times: Vec<f64>,
}

impl BrownianDual {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let p = &config.params;
        let default = MarketModel::Brownian(BrownianMarketSpec::new(1.0, 1e-3)?);
        let MarketModel::Brownian(spec) = market(config, Some("brownian"), default)? else {
            unreachable!("kind checked")
        };
        let w0 = p.w0.or(config.market.map(|_| spec.w));
        let wbar = p.wbar.map(|w| positive("wbar", w)).transpose()?;
        if let (Some(w0), Some(wbar)) = (w0, wbar) {
            if !(w0 > wbar) {
                return Err(CliError::Config(format!("start level {w0} must exceed wbar {wbar}")));
            }
        }
        let times = p.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        increasing_times(&times)?;
        Ok(Self {
            lambda: ctx.costs.lambda(),
            x: positive("x", p.x.unwrap_or(1.0))?,
            solver: if wbar.is_none() {
                Some(solver(config, ctx)?)
            } else {
                None
            },
            wbar,
            w0,
            dt: spec.dt,
            bridge_correction: spec.bridge_correction,
            paths: sample_count(config.samples.paths, 200, 50, ctx)?,
            times,
        })
    }
}

impl Plan for BrownianDual {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        vec![
            assertion(
                "deflator-mean",
                "E[Y0_t] = e^(-t/λ) is below 1 and strictly decreasing over the listed times",
            ),
            assertion(
                "deflated-value",
                "|phi0 Y0 + phi1 Y1 - x| <= 1e-12 x on [0, sigma] for leverage 1/λ",
            ),
            assertion(
                "corridor",
                "Y1/Y0 inside [(1-λ) S, S] on [0, sigma], both components positive",
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let costs = &ctx.costs;
        let (wbar, source) = match self.wbar {
            Some(w) => (w, "config"),
            None => {
                let solved = solve(costs, self.solver.as_ref().expect("solver set when wbar is absent"))?;
                (solved.wbar.wbar, "dp")
            }
        };
        let w0 = self.w0.unwrap_or(wbar + 1.0);
        if !(w0 > wbar) {
            return Err(CliError::Config(format!("start level {w0} must exceed wbar {wbar}")));
        }
        let spec = BrownianMarketSpec::new(w0, self.dt)?.with_bridge_correction(self.bridge_correction);

        let means: Vec<f64> = self.times.iter().map(|t| (-t / self.lambda).exp()).collect();
        let mean_ok = means.iter().all(|&m| m < 1.0) && means.windows(2).all(|p| p[1] < p[0]);

        let cap = costs.max_leverage();
        let rows = mc::collect(self.paths, ctx.seed, |rng: &mut McRng| {
            let path = sample_brownian_market(&spec, rng)?;
            let sigma = first_passage_index(&path, wbar);
            let s = constant_leverage_strategy(self.x, cap, &path, costs)?;
            let d = brownian_dual_deflator(costs, &path, sigma)?;
            let err = deflated_values(&s, &d)?
                .iter()
                .map(|v| (v - self.x).abs())
                .fold(0.0, f64::max);
            let c = cps_corridor_check(&d, &path, costs)?;
            Ok((err, c.passed && c.strictly_positive, path.times()[sigma]))
        })?;
        let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let corridor_ok = rows.iter().all(|r| r.1);
        let sigmas: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let (sigma_mean, sigma_se) = mc::mean_se(&sigmas);

        let checks = vec![
            Check::new(
                "deflator-mean",
                mean_ok,
                means.iter().map(|m| format!("{m:.5}")).collect::<Vec<_>>().join(", "),
            ),
            Check::new(
                "deflated-value",
                worst <= 1e-12 * self.x,
                format!("max error {worst:.1e} over {} paths", self.paths),
            ),
            Check::new("corridor", corridor_ok, format!("{} paths", self.paths)),
        ];

        let mut rng = tclab_core::mc::stream_rng(ctx.seed, u64::MAX);
        let path = sample_brownian_market(&spec, &mut rng)?;
        let strategy = constant_leverage_strategy(self.x, cap, &path, costs)?;
        Ok(Outcome {
            results: json!({
                "wbar": wbar,
                "wbar_source": source,
                "w0": w0,
                "deflator_means": self.times.iter().zip(&means).map(|(t, m)| json!({"t": t, "mean": m})).collect::<Vec<_>>(),
                "max_deflated_error": worst,
                "sigma_mean": sigma_mean,
                "sigma_se": sigma_se,
            }),
            checks,
            artifacts: path_artifacts("path", &path, Some(&strategy), costs)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct NoShadowPrice {
    pub lambda: f64,
    pub x: f64,
    pub distance: f64,
    pub c_list: Vec<f64>,
    pub n: usize,
}

impl NoShadowPrice {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let p = &config.params;
        let c_list = p.c_list.clone().unwrap_or_else(|| vec![0.0, 1e2, 1e3, 1e4]);
        if c_list.is_empty() || c_list[0] < 0.0 || c_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("c_list must be non-negative and increasing".into()));
        }
        Ok(Self {
            lambda: ctx.costs.lambda(),
            x: positive("x", p.x.unwrap_or(1.0))?,
            distance: positive("distance", p.distance.unwrap_or(1.0))?,
            c_list,
            n: sample_count(config.samples.n, 100_000, 10_000, ctx)?,
        })
    }
}

impl Plan for NoShadowPrice {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        vec![
            assertion("zero-position", "E[ln(x + 0 (S_sigma - 1))] = ln x exactly"),
            assertion(
                "log-growth",
                "for consecutive C >= 100: |E[ln(x + C' G)] - E[ln(x + C G)] - ln(C'/C)| < 0.1",
            ),
            assertion("no-downside", "every sampled gain S_sigma - 1 is non-negative"),
            assertion(
                "inadmissible-under-costs",
                "buying C > x/λ shares at time 0 is inadmissible with costs",
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let t = unbounded_profit_demo(self.distance, &self.c_list, self.x, &ctx.costs, self.n, ctx.seed)?;
        let zero = t.rows.iter().find(|r| r.c == 0.0);
        let zero_ok = zero.is_none_or(|r| r.mean == self.x.ln());
        let mut growth = Vec::new();
        for w in t.rows.windows(2) {
            if w[0].c >= 100.0 {
                let d = w[1].diff_from_prev.expect("set after the first row");
                growth.push((w[1].c, d, (w[1].c / w[0].c).ln()));
            }
        }
        let growth_ok = growth.iter().all(|(_, d, target)| (d - target).abs() < 0.1);
        let cap = self.x / self.lambda;
        let inadmissible_ok = t.rows.iter().filter(|r| r.c > cap).all(|r| !r.admissible_under_costs);
        let checks = vec![
            Check::new(
                "zero-position",
                zero_ok,
                zero.map_or("no C = 0 row".into(), |r| format!("{}", r.mean)),
            ),
            Check::new(
                "log-growth",
                growth_ok,
                growth
                    .iter()
                    .map(|(c, d, target)| format!("C={c}: {d:.4} vs {target:.4}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            Check::new(
                "no-downside",
                t.negative_gains == 0,
                format!("{} negative gains", t.negative_gains),
            ),
            Check::new(
                "inadmissible-under-costs",
                inadmissible_ok,
                format!("{} rows above x/λ = {cap}", t.rows.iter().filter(|r| r.c > cap).count()),
            ),
        ];
        let rows: Vec<Vec<f64>> = t
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.c,
                    r.mean,
                    r.std_err,
                    r.diff_from_prev.unwrap_or(f64::NAN),
                    r.diff_se.unwrap_or(f64::NAN),
                    f64::from(u8::from(r.admissible_under_costs)),
                ]
            })
            .collect();
        Ok(Outcome {
            results: to_value(&t),
            checks,
            artifacts: vec![csv_table(
                "profit.csv",
                &[
                    "c",
                    "mean",
                    "std_err",
                    "diff_from_prev",
                    "diff_se",
                    "admissible_under_costs",
                ],
                &rows,
            )?],
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Nupbr {
    pub market: MarketModel,
    pub h_list: Vec<f64>,
    pub n: usize,
}

impl Nupbr {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let default = MarketModel::Brownian(BrownianMarketSpec::new(1.0, 1e-3)?);
        let h_list = config
            .params
            .h_list
            .clone()
            .unwrap_or_else(|| vec![1.0, 10.0, 100.0, 1000.0]);
        if h_list.is_empty() || h_list[0] <= 0.0 || h_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("h_list must be positive and increasing".into()));
        }
        Ok(Self {
            market: market(config, None, default)?,
            h_list,
            n: sample_count(config.samples.n, 100_000, 10_000, ctx)?,
        })
    }
}

impl Plan for Nupbr {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        vec![
            assertion("no-downside", "min over paths of H (S_tau - 1) >= 0 for every H"),
            assertion(
                "positive-median",
                "the median gain of the smallest position is positive",
            ),
            assertion(
                "linear-scaling",
                "every reported quantile of H (S_tau - 1) equals H times the unit-position quantile (rel. 1e-12)",
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let t = nupbr_violation_demo(&self.market, &self.h_list, self.n, ctx.seed)?;
        let first = t.rows[0];
        let unit = |q: f64| q / first.h;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        let scaling_ok = t.rows.iter().all(|r| {
            [
                (r.min, first.min),
                (r.q05, first.q05),
                (r.median, first.median),
                (r.q95, first.q95),
                (r.q99, first.q99),
            ]
            .iter()
            .all(|&(q, q1)| close(q, r.h * unit(q1)))
        });
        let checks = vec![
            Check::new(
                "no-downside",
                t.rows.iter().all(|r| r.min >= 0.0),
                format!("min gain at H = {}: {:.3e}", first.h, first.min),
            ),
            Check::new("positive-median", first.median > 0.0, format!("{:.5}", first.median)),
            Check::new("linear-scaling", scaling_ok, format!("{} positions", t.rows.len())),
        ];
        let rows: Vec<Vec<f64>> = t
            .rows
            .iter()
            .map(|r| vec![r.h, r.mean, r.min, r.q05, r.median, r.q95, r.q99])
            .collect();
        Ok(Outcome {
            results: to_value(&t),
            checks,
            artifacts: vec![csv_table(
                "gains.csv",
                &["h", "mean", "min", "q05", "median", "q95", "q99"],
                &rows,
            )?],
        })
    }
}

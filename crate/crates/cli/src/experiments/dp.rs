//! Free-boundary problem: value function, threshold w̄ and the
//! dynamic-programming cross-checks.

use serde::Serialize;
use serde_json::{json, Value};
use tclab_core::dp::{
    dpp_residual, max_leverage_optimality_check, policy_value_mc, verify_value_properties, PropertyCheck, StopRule,
    VerifyConfig,
};
use tclab_core::io::{write_value_grid_csv, GridMeta};
use tclab_core::BrownianMarketSpec;

use super::*;

/// Sweep deltas kept in the grid metadata: every this many.
const DELTAS_EVERY: usize = 100;

fn lower_threshold(policy: &tclab_core::LeveragePolicy) -> Option<f64> {
    policy
        .w_nodes()
        .iter()
        .zip(policy.ell_nodes())
        .find(|(_, &l)| l > 0.0)
        .map(|(&w, _)| w)
}

#[derive(Debug, Serialize)]
pub struct ValueFunction {
    pub lambda: f64,
    pub solver: SolverConfig,
    pub verify: VerifyConfig,
}

impl ValueFunction {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        Ok(Self {
            lambda: ctx.costs.lambda(),
            solver: solver(config, ctx)?,
            verify: VerifyConfig::default(),
        })
    }
}

const PROPERTIES: [(&str, &str); 8] = [
    ("boundary-exact", "v(l, 0) = ln(1 - λ l) at every node"),
    ("concave-in-l", "second differences in l are <= concavity tolerance"),
    ("non-increasing-in-l", "v is non-increasing in l"),
    ("non-decreasing-in-w", "v is non-decreasing in w"),
    ("flat-below-boundary", "v(l, w) = v(0, w) for l below the free boundary"),
    (
        "strictly-decreasing-above",
        "v strictly decreases in l above the free boundary",
    ),
    ("boundary-monotone", "the free boundary ℓ(w) is non-decreasing"),
    ("upper-bound", "v(l, w) <= w/λ"),
];

impl Plan for ValueFunction {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        let mut a = vec![assertion(
            "converged",
            format!("sup-norm sweep change < {}", self.solver.tol),
        )];
        a.extend(PROPERTIES.iter().map(|&(id, s)| assertion(id, s)));
        a.push(assertion(
            "policy-isotonic",
            "raw and monotone free boundary differ by at most 2 l-steps",
        ));
        a
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let s = solve(&ctx.costs, &self.solver)?;
        let rep = verify_value_properties(&s.grid, &self.verify);
        let m = &s.grid.meta;
        let prop = |c: &PropertyCheck| (c.passed, format!("worst {:.2e}", c.worst));
        let list: [&PropertyCheck; 8] = [
            &rep.boundary_exact,
            &rep.concave_in_l,
            &rep.non_increasing_in_l,
            &rep.non_decreasing_in_w,
            &rep.flat_below_boundary,
            &rep.strictly_decreasing_above,
            &rep.boundary_monotone,
            &rep.upper_bound,
        ];
        let mut checks = vec![Check::new(
            "converged",
            m.final_delta < self.solver.tol,
            format!("{} sweeps, final change {:.1e}", m.iterations, m.final_delta),
        )];
        for ((id, _), c) in PROPERTIES.iter().zip(list) {
            let (ok, obs) = prop(c);
            checks.push(Check::new(id, ok, obs));
        }
        let bound = 2.0 * self.solver.dl;
        checks.push(Check::new(
            "policy-isotonic",
            s.policy.discrepancy <= bound + 1e-12,
            format!("{:.3} (bound {bound})", s.policy.discrepancy),
        ));

        let mut grid_csv = Vec::new();
        write_value_grid_csv(&mut grid_csv, &s.grid)?;
        let meta = GridMeta::from_grid(&s.grid, DELTAS_EVERY);
        let v_at: Vec<Value> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&w| json!({"l": 0.0, "w": w, "v": s.grid.value_at(0.0, w)}))
            .collect();
        let results = json!({
            "n_l": s.grid.n_l(),
            "n_w": s.grid.n_w(),
            "iterations": m.iterations,
            "final_delta": m.final_delta,
            "properties": rep,
            "policy_discrepancy": s.policy.discrepancy,
            "wbar": s.wbar,
            "lower_threshold": lower_threshold(&s.policy.policy),
            "v_at": v_at,
        });
        Ok(Outcome {
            results,
            checks,
            artifacts: vec![
                Artifact {
                    name: "value_grid.csv".into(),
                    bytes: grid_csv,
                },
                json_artifact("value_grid.json", &meta)?,
                policy_artifact("policy.csv", &s.policy.policy)?,
            ],
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Wbar {
    pub lambda: f64,
    pub solver: SolverConfig,
    pub refined: SolverConfig,
    pub max_rel_change: f64,
}

impl Wbar {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let solver = solver(config, ctx)?;
        let refined = solver.refined();
        refined.validate().map_err(CliError::config)?;
        Ok(Self {
            lambda: ctx.costs.lambda(),
            solver,
            refined,
            max_rel_change: 0.10,
        })
    }
}

impl Plan for Wbar {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        vec![
            assertion(
                "saturation-inside",
                "ℓ(w) reaches 1/λ inside (0, w_max), below the top tenth of the grid, on both grids",
            ),
            assertion(
                "refinement-stable",
                format!("|w̄_refined - w̄| / w̄ <= {} when every step halves", self.max_rel_change),
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let base = solve(&ctx.costs, &self.solver)?;
        let fine = solve(&ctx.costs, &self.refined)?;
        let (w0, w1) = (base.wbar.wbar, fine.wbar.wbar);
        let inside = |e: &tclab_core::dp::WbarEstimate, w_max: f64| e.wbar > 0.0 && e.wbar < w_max && !e.unreliable;
        let inside_ok = inside(&base.wbar, self.solver.w_max) && inside(&fine.wbar, self.refined.w_max);
        let rel = (w1 - w0).abs() / w0;
        let checks = vec![
            Check::new("saturation-inside", inside_ok, format!("{w0:.3}, {w1:.3}")),
            Check::new(
                "refinement-stable",
                rel <= self.max_rel_change,
                format!("{:.2}%", 100.0 * rel),
            ),
        ];
        let results = json!({
            "wbar": base.wbar,
            "wbar_refined": fine.wbar,
            "relative_change": rel,
            "lower_threshold": lower_threshold(&base.policy.policy),
            "lower_threshold_refined": lower_threshold(&fine.policy.policy),
            "iterations": base.grid.meta.iterations,
            "iterations_refined": fine.grid.meta.iterations,
        });
        Ok(Outcome {
            results,
            checks,
            artifacts: vec![
                policy_artifact("policy.csv", &base.policy.policy)?,
                policy_artifact("policy_refined.csv", &fine.policy.policy)?,
            ],
        })
    }
}

#[derive(Debug, Serialize)]
pub struct DppCheck {
    pub lambda: f64,
    pub solver: SolverConfig,
    pub market: BrownianMarketSpec,
    pub l0: f64,
    pub stops: Vec<StopRule>,
    pub allowance: f64,
    pub n: usize,
}

impl DppCheck {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let p = &config.params;
        let solver = solver(config, ctx)?;
        let default =
            MarketModel::Brownian(BrownianMarketSpec::new(p.w0.unwrap_or(3.0), 1e-3)?.with_bridge_correction(true));
        let MarketModel::Brownian(mut spec) = market(config, Some("brownian"), default)? else {
            unreachable!("kind checked")
        };
        if let Some(w0) = p.w0 {
            spec.w = w0;
            spec.validate().map_err(CliError::config)?;
        }
        if spec.w > solver.w_max {
            return Err(CliError::Config(format!(
                "start level {} above w_max {}",
                spec.w, solver.w_max
            )));
        }
        let l0 = p.l0.unwrap_or(0.0);
        if !(0.0..=ctx.costs.max_leverage()).contains(&l0) {
            return Err(CliError::Config(format!("l0 {l0} outside [0, 1/λ]")));
        }
        let stops = p
            .stops
            .clone()
            .unwrap_or_else(|| vec![StopRule::BandExit { lo: 1.0, hi: 5.0 }, StopRule::Horizon { t: 0.5 }]);
        for s in &stops {
            match *s {
                StopRule::Immediate => {}
                StopRule::Horizon { t } => {
                    positive("horizon", t)?;
                }
                StopRule::BandExit { lo, hi } => {
                    if !(lo < spec.w && spec.w < hi) {
                        return Err(CliError::Config(format!(
                            "start level {} outside band ({lo}, {hi})",
                            spec.w
                        )));
                    }
                }
            }
        }
        let allowance = p.allowance.unwrap_or(if ctx.quick { 0.05 } else { 0.02 });
        if !(allowance >= 0.0) {
            return Err(CliError::Config(format!(
                "allowance must be non-negative, got {allowance}"
            )));
        }
        Ok(Self {
            lambda: ctx.costs.lambda(),
            solver,
            market: spec,
            l0,
            stops,
            allowance,
            n: sample_count(config.samples.n, 100_000, 5_000, ctx)?,
        })
    }
}

impl Plan for DppCheck {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, thr: f64) -> Vec<Assertion> {
        let tol = format!("{thr} SE + {}", self.allowance);
        vec![
            assertion(
                "policy-value",
                format!("|E[ln V_tau] under the extracted policy - v(l0, w0)| <= {tol}"),
            ),
            assertion(
                "dpp-residual",
                format!("|E[log book + v(L, W) at the stop] - v(l0, w0)| <= {tol} for every stop rule"),
            ),
            assertion(
                "max-leverage-until-wbar",
                format!("from w̄ + 1, |z| < {thr} for the paired difference with maximal leverage until w̄"),
            ),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let costs = &ctx.costs;
        let thr = ctx.threshold;
        let s = solve(costs, &self.solver)?;
        let policy = &s.policy.policy;
        let v = s.grid.value_at(self.l0, self.market.w);
        let e = policy_value_mc(policy, costs, &self.market, self.l0, self.n, ctx.seed)?;
        let diff = e.mean - v;
        let mut checks = vec![Check::new(
            "policy-value",
            diff.abs() <= thr * e.std_err + self.allowance,
            format!("MC {:.5} ± {:.5} vs v {v:.5}", e.mean, e.std_err),
        )];

        let mut residuals = Vec::new();
        for (k, &stop) in self.stops.iter().enumerate() {
            residuals.push(dpp_residual(
                &s.grid,
                policy,
                costs,
                &self.market,
                self.l0,
                stop,
                self.n,
                ctx.seed + 1 + k as u64,
            )?);
        }
        let dpp_ok = residuals
            .iter()
            .all(|r| r.residual.mean.abs() <= thr * r.residual.std_err + self.allowance);
        checks.push(Check::new(
            "dpp-residual",
            dpp_ok,
            residuals
                .iter()
                .map(|r| format!("{:+.4} ± {:.4}", r.residual.mean, r.residual.std_err))
                .collect::<Vec<_>>()
                .join(", "),
        ));

        let wbar = s.wbar.wbar;
        let from = BrownianMarketSpec {
            w: wbar + 1.0,
            t_cap: tclab_core::markets::T_CAP_FACTOR * (wbar + 1.0),
            ..self.market
        };
        let cmp = max_leverage_optimality_check(policy, costs, &from, wbar, self.n, ctx.seed ^ 0x77)?;
        checks.push(Check::new(
            "max-leverage-until-wbar",
            cmp.diff_z.abs() < thr,
            format!(
                "diff {:+.2e}, z {:+.2}, identical on {}/{}",
                cmp.diff_mean, cmp.diff_z, cmp.identical_paths, cmp.n
            ),
        ));

        Ok(Outcome {
            results: json!({
                "wbar": s.wbar,
                "v_start": v,
                "policy_value": e,
                "residuals": residuals,
                "max_leverage_comparison": cmp,
            }),
            checks,
            artifacts: vec![policy_artifact("policy.csv", policy)?],
        })
    }
}

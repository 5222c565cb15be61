//! Self-financing and admissibility of every strategy family, plus
//! constructed violations that the checker must catch.

use serde::Serialize;
use serde_json::{json, Value};
use tclab_core::markets::{poisson_path_with_tau, sample_brownian_market};
use tclab_core::mc::{self, McRng};
use tclab_core::strategies::{barrier_strategy, constant_leverage_strategy};
use tclab_core::trading::{check_admissible, check_self_financing, DEFAULT_SELF_FINANCING_TOL};
use tclab_core::{BrownianMarketSpec, LeveragePolicy, PoissonMarketSpec, SamplePath, StrategyPath};

use super::*;

#[derive(Debug, Serialize)]
pub struct Suite {
    pub lambda: f64,
    pub solver: SolverConfig,
    pub w0: f64,
    pub dt: f64,
    pub paths: usize,
    pub ells: Vec<f64>,
    pub taus: Vec<f64>,
}

impl Suite {
    pub fn prepare(config: &ExperimentConfig, ctx: &Ctx) -> Result<Self, CliError> {
        let cap = ctx.costs.max_leverage();
        let ells = config
            .params
            .ells
            .clone()
            .unwrap_or_else(|| (0..=4).map(|k| k as f64 * cap / 4.0).collect());
        if ells.is_empty() || ells.iter().any(|&l| !(0.0..=cap).contains(&l)) {
            return Err(CliError::Config(format!("ells must lie in [0, {cap}]")));
        }
        let taus = config.params.times.clone().unwrap_or_else(|| vec![0.7, 2.3]);
        increasing_times(&taus)?;
        Ok(Self {
            lambda: ctx.costs.lambda(),
            solver: solver(config, ctx)?,
            w0: positive("w0", config.params.w0.unwrap_or(2.0))?,
            dt: 1e-3,
            paths: sample_count(config.samples.paths, 200, 50, ctx)?,
            ells,
            taus,
        })
    }

    /// Relative per-step slack of continuously rebalanced constant leverage
    /// sampled on a grid, to second order in `dt`.
    fn leading_slack(ell: f64, dt: f64) -> f64 {
        if ell > 1.0 {
            ell * (ell - 1.0) / (2.0 * (2.0 * ell - 1.0)) * dt * dt
        } else {
            dt * dt
        }
    }
}

impl Plan for Suite {
    fn parameters(&self) -> Value {
        to_value(self)
    }

    fn assertions(&self, _thr: f64) -> Vec<Assertion> {
        vec![
            assertion(
                "barrier-strategies",
                format!(
                    "minimal-buy strategies (extracted and a fixed policy) are self-financing at tol {DEFAULT_SELF_FINANCING_TOL} and admissible on every path"
                ),
            ),
            assertion(
                "constant-leverage",
                "constant leverage sampled from continuous time is admissible with relative slack within 1.1x its second-order term",
            ),
            assertion("slack-order", "halving dt divides the constant-leverage slack by a factor in [3.6, 4.4]"),
            assertion("violations-caught", "every constructed violation fails the check"),
        ]
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let costs = &ctx.costs;
        let cap = costs.max_leverage();
        let s = solve(costs, &self.solver)?;
        let hand = LeveragePolicy::new(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.25 * cap, 0.75 * cap, cap], costs)?;
        let spec = BrownianMarketSpec::new(self.w0, self.dt)?;
        let barrier = mc::collect(self.paths, ctx.seed, |rng: &mut McRng| {
            let path = sample_brownian_market(&spec, rng)?;
            let mut worst = f64::NEG_INFINITY;
            let mut ok = true;
            for pol in [&s.policy.policy, &hand] {
                let st = barrier_strategy(1.0, pol, &path, costs)?;
                let r = check_self_financing(&st, &path, costs, DEFAULT_SELF_FINANCING_TOL)?;
                worst = worst.max(r.worst_slack);
                ok &= r.passed && check_admissible(&st, &path, costs)?.admissible;
            }
            Ok((ok, worst))
        })?;
        let barrier_ok = barrier.iter().all(|r| r.0);
        let barrier_worst = barrier.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);

        let poisson_path = |dt: f64, tau: f64| -> Result<SamplePath, CliError> {
            Ok(poisson_path_with_tau(
                &PoissonMarketSpec::new(1.0)?.with_grid(dt, 0.0)?,
                tau,
            )?)
        };
        let mut const_ok = true;
        let mut const_rows = Vec::new();
        for &ell in &self.ells {
            for &tau in &self.taus {
                let p = poisson_path(self.dt, tau)?;
                let st = constant_leverage_strategy(1.0, ell, &p, costs)?;
                let tol = 1.1 * Self::leading_slack(ell, self.dt) + 1e-12;
                let r = check_self_financing(&st, &p, costs, tol)?;
                let adm = check_admissible(&st, &p, costs)?.admissible;
                const_ok &= r.passed && adm;
                const_rows
                    .push(json!({"ell": ell, "tau": tau, "worst_slack": r.worst_slack, "tol": tol, "admissible": adm}));
            }
        }

        let ell_mid = 0.5 * (1.0 + cap);
        let slack = |dt: f64| -> Result<f64, CliError> {
            let p = poisson_path(dt, 2.0)?;
            let st = constant_leverage_strategy(1.0, ell_mid, &p, costs)?;
            Ok(check_self_financing(&st, &p, costs, 1.0)?.worst_slack)
        };
        let (s1, s2) = (slack(2.0 * self.dt)?, slack(self.dt)?);
        let ratio = s1 / s2;

        let (caught, cases) = constructed_violations(&poisson_path(0.1, 1.0)?, costs)?;

        let checks = vec![
            Check::new(
                "barrier-strategies",
                barrier_ok,
                format!("{} paths, worst slack {barrier_worst:.1e}", self.paths),
            ),
            Check::new("constant-leverage", const_ok, format!("{} cases", const_rows.len())),
            Check::new(
                "slack-order",
                (3.6..=4.4).contains(&ratio),
                format!("{s1:.2e} / {s2:.2e} = {ratio:.3}"),
            ),
            Check::new("violations-caught", caught == cases, format!("{caught}/{cases}")),
        ];

        let mut rng = tclab_core::mc::stream_rng(ctx.seed, u64::MAX);
        let path = sample_brownian_market(&spec, &mut rng)?;
        let strategy = barrier_strategy(1.0, &s.policy.policy, &path, costs)?;
        Ok(Outcome {
            results: json!({
                "barrier_worst_slack": barrier_worst,
                "constant_leverage": const_rows,
                "slack_ratio": {"ell": ell_mid, "coarse": s1, "fine": s2, "ratio": ratio},
                "violations": {"caught": caught, "cases": cases},
            }),
            checks,
            artifacts: path_artifacts("path", &path, Some(&strategy), costs)?,
        })
    }
}

/// Sells at the ask, buys at the bid, and creates bond from nothing.
fn constructed_violations(p: &SamplePath, costs: &tclab_core::CostSpec) -> Result<(usize, usize), CliError> {
    let n = p.len();
    let s3 = p.price()[3];
    let lambda = costs.lambda();
    let mut cases = Vec::new();

    let mut a = vec![1.0; n];
    let mut q = vec![1.0; n];
    a[0] = 0.0;
    for k in 3..n {
        a[k] = s3;
        q[k] = 0.0;
    }
    cases.push((a, q));

    let mut a = vec![1.0; n];
    let mut q = vec![0.0; n];
    for k in 3..n {
        a[k] = 1.0 - (1.0 - lambda) * s3;
        q[k] = 1.0;
    }
    cases.push((a, q));

    let mut a = vec![1.0; n];
    a[5..].iter_mut().for_each(|v| *v = 1.01);
    cases.push((a, vec![0.0; n]));

    let total = cases.len();
    let mut caught = 0;
    for (phi0, phi1) in cases {
        let s = StrategyPath::from_holdings(phi0, phi1, 1.0, 0.0)?;
        if !check_self_financing(&s, p, costs, DEFAULT_SELF_FINANCING_TOL)?.passed {
            caught += 1;
        }
    }
    Ok((caught, total))
}

use serde::{Deserialize, Serialize};

use super::solver::ValueGrid;
use crate::error::{invalid, Error, Result};
use crate::markets::{BrownianMarketSpec, BrownianWalk, MarketModel};
use crate::mc::{self, z_score, McEstimate, McRng};
use crate::strategies::{expected_log_utility_mc, run_policy, LeveragePolicy, PolicyOutcome, StrategyFactory};
use crate::trading::CostSpec;

/// Bounded stopping rules for the dynamic-programming check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    Immediate,
    /// First grid time at or after `t`.
    Horizon {
        t: f64,
    },
    /// First exit of the driver from the open band `(lo, hi)`.
    BandExit {
        lo: f64,
        hi: f64,
    },
}

impl StopRule {
    fn fires(&self, walk: &BrownianWalk) -> bool {
        match *self {
            StopRule::Immediate => true,
            StopRule::Horizon { t } => walk.time() >= t - 0.5 * walk.dt(),
            StopRule::BandExit { lo, hi } => walk.level() <= lo || walk.level() >= hi,
        }
    }
}

fn censored(spec: &BrownianMarketSpec) -> Error {
    Error::Censored { t_cap: spec.t_cap }
}

/// `E[ln V^liq_tau]` of the minimal-buy strategy for `policy`, started at
/// leverage `l0` with unit book value and driver level `spec.w`.
pub fn policy_value_mc(
    policy: &LeveragePolicy,
    costs: &CostSpec,
    spec: &BrownianMarketSpec,
    l0: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    spec.validate()?;
    if !(0.0..=costs.max_leverage()).contains(&l0) {
        return Err(invalid(format!("start leverage {l0} outside [0, 1/lambda]")));
    }
    mc::estimate(n, seed, |rng: &mut McRng| {
        let mut walk = BrownianWalk::new(spec);
        match run_policy(&mut walk, l0, costs, rng, |w| policy.eval(w), |_| false) {
            PolicyOutcome::Absorbed { log_liquidation, .. } => Ok(log_liquidation),
            PolicyOutcome::Censored => Err(censored(spec)),
            PolicyOutcome::Stopped { .. } => unreachable!("no stop rule"),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DppResidual {
    pub l0: f64,
    pub w0: f64,
    pub v_start: f64,
    pub stop: StopRule,
    /// Estimate of `E[log book + v(L, W) at σ, or log liquidation at tau] - v(l0, w0)`.
    pub residual: McEstimate,
}

/// Monte-Carlo residual of the dynamic-programming principle under the
/// policy, from `(l0, spec.w)` to `min(σ, tau)`.
#[allow(clippy::too_many_arguments)]
pub fn dpp_residual(
    grid: &ValueGrid,
    policy: &LeveragePolicy,
    costs: &CostSpec,
    spec: &BrownianMarketSpec,
    l0: f64,
    stop: StopRule,
    n: usize,
    seed: u64,
) -> Result<DppResidual> {
    spec.validate()?;
    if let StopRule::BandExit { lo, hi } = stop {
        if !(lo < spec.w && spec.w < hi) {
            return Err(invalid(format!("start level {} outside the band ({lo}, {hi})", spec.w)));
        }
    }
    let v_start = grid.value_at(l0, spec.w);
    let residual = mc::estimate(n, seed, |rng: &mut McRng| {
        let mut walk = BrownianWalk::new(spec);
        let end = match run_policy(&mut walk, l0, costs, rng, |w| policy.eval(w), |walk| stop.fires(walk)) {
            PolicyOutcome::Absorbed { log_liquidation, .. } => log_liquidation,
            PolicyOutcome::Stopped {
                log_book, leverage, w, ..
            } => log_book + grid.value_at(leverage, w),
            PolicyOutcome::Censored => return Err(censored(spec)),
        };
        Ok(end - v_start)
    })?;
    Ok(DppResidual {
        l0,
        w0: spec.w,
        v_start,
        stop,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxLeverageComparison {
    pub w_start: f64,
    pub wbar: f64,
    pub barrier: McEstimate,
    pub max_leverage_until: McEstimate,
    /// Paired difference `barrier - max_leverage_until` on common paths.
    pub diff_mean: f64,
    pub diff_se: f64,
    pub diff_z: f64,
    /// Paths on which both strategies produced the same terminal value.
    pub identical_paths: usize,
    pub n: usize,
}

/// Compares the policy's minimal-buy strategy with "maximal leverage until
/// the driver first reaches `wbar`, then the policy", on common paths.
pub fn max_leverage_optimality_check(
    policy: &LeveragePolicy,
    costs: &CostSpec,
    spec: &BrownianMarketSpec,
    wbar: f64,
    n: usize,
    seed: u64,
) -> Result<MaxLeverageComparison> {
    spec.validate()?;
    if spec.w < wbar {
        return Err(invalid(format!("start level {} below the threshold {wbar}", spec.w)));
    }
    let cap = costs.max_leverage();
    let pairs = mc::collect(n, seed, |rng: &mut McRng| {
        let mut twin = rng.clone();
        let mut walk = BrownianWalk::new(spec);
        let a = run_policy(&mut walk, 0.0, costs, rng, |w| policy.eval(w), |_| false);
        let mut crossed = false;
        let mut walk = BrownianWalk::new(spec);
        let target = |w: f64| {
            crossed |= w <= wbar;
            if crossed {
                policy.eval(w)
            } else {
                cap
            }
        };
        let b = run_policy(&mut walk, 0.0, costs, &mut twin, target, |_| false);
        match (a, b) {
            (
                PolicyOutcome::Absorbed { log_liquidation: x, .. },
                PolicyOutcome::Absorbed { log_liquidation: y, .. },
            ) => Ok((x, y)),
            _ => Err(censored(spec)),
        }
    })?;
    let (xa, xb): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let d: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    let (diff_mean, diff_se) = mc::mean_se(&d);
    let est = |xs: &[f64]| {
        let (mean, std_err) = mc::mean_se(xs);
        McEstimate {
            mean,
            std_err,
            n,
            seed,
            non_finite: 0,
        }
    };
    Ok(MaxLeverageComparison {
        w_start: spec.w,
        wbar,
        barrier: est(&xa),
        max_leverage_until: est(&xb),
        diff_mean,
        diff_se,
        diff_z: z_score(diff_mean, diff_se),
        identical_paths: pairs.iter().filter(|(x, y)| x == y).count(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWRow {
    pub ell: f64,
    pub utility: McEstimate,
    /// `(utility - ln x) / SE`; negative means the bond-only strategy wins.
    pub z_vs_bond: f64,
}

/// Expected log-utility of constant leverage near the absorbing boundary,
/// against holding only the bond.
pub fn small_w_regime_check(costs: &CostSpec, w: f64, ells: &[f64], n: usize, seed: u64) -> Result<Vec<SmallWRow>> {
    let model = MarketModel::Brownian(BrownianMarketSpec::new(w, 1e-3)?);
    ells.iter()
        .map(|&ell| {
            let utility =
                expected_log_utility_mc(&StrategyFactory::ConstantLeverage { ell }, &model, 1.0, costs, n, seed)?;
            Ok(SmallWRow {
                ell,
                utility,
                z_vs_bond: utility.z_against(0.0),
            })
        })
        .collect()
}

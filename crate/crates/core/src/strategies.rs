//! Constant-leverage and policy-driven (barrier) trading strategies.
//!
//! Between trades the holdings are frozen while `S` grows at unit rate, so the
//! leverage follows the logistic flow `dL = L (1 - L) dt` and the log of the
//! book value `phi0 + phi1 S` grows at rate `L`. Buying at the ask leaves the
//! book value unchanged, which is what makes the minimal-buy barrier strategy
//! cheap to simulate as a scalar recursion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markets::{sample_tau_brownian, sample_tau_poisson, BrownianWalk, MarketModel, WalkStatus};
use crate::mc::{self, McEstimate, McRng};
use crate::trading::{CostSpec, DriverKind, SamplePath, StrategyPath};

/// Slack allowed when checking a policy against the `1/lambda` cap.
const CAP_EPS: f64 = 1e-12;

/// How [`LeveragePolicy::eval`] reads between table nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyInterp {
    /// Right-continuous step: the value of the node at or below `w`.
    Step,
    #[default]
    Linear,
}

/// Target leverage as a non-decreasing function of the driver level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeveragePolicy {
    w: Vec<f64>,
    ell: Vec<f64>,
    interp: PolicyInterp,
}

impl LeveragePolicy {
    pub fn new(w: Vec<f64>, ell: Vec<f64>, costs: &CostSpec) -> Result<Self> {
        if w.is_empty() || w.len() != ell.len() {
            return Err(invalid(format!(
                "policy table needs matching non-empty columns ({} vs {})",
                w.len(),
                ell.len()
            )));
        }
        if w.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(invalid("policy w nodes must be strictly increasing"));
        }
        if ell.windows(2).any(|p| p[1] < p[0]) {
            return Err(invalid("policy must be non-decreasing in w"));
        }
        let cap = costs.max_leverage();
        if let Some(&bad) = ell.iter().find(|&&l| !(l >= 0.0 && l <= cap * (1.0 + CAP_EPS))) {
            return Err(Error::PolicyOutOfRange { value: bad, cap });
        }
        Ok(Self {
            w,
            ell,
            interp: PolicyInterp::Linear,
        })
    }

    pub fn constant(ell: f64, costs: &CostSpec) -> Result<Self> {
        Self::new(vec![0.0], vec![ell], costs)
    }

    pub fn with_interp(mut self, interp: PolicyInterp) -> Self {
        self.interp = interp;
        self
    }

    pub fn w_nodes(&self) -> &[f64] {
        &self.w
    }
    pub fn ell_nodes(&self) -> &[f64] {
        &self.ell
    }
    pub fn interp(&self) -> PolicyInterp {
        self.interp
    }

    pub fn max_value(&self) -> f64 {
        *self.ell.last().expect("non-empty policy")
    }

    /// Target leverage at driver level `w`; flat beyond the table ends.
    pub fn eval(&self, w: f64) -> f64 {
        let n = self.w.len();
        if w <= self.w[0] {
            return self.ell[0];
        }
        if w >= self.w[n - 1] {
            return self.ell[n - 1];
        }
        let i = self.w.partition_point(|&x| x <= w) - 1;
        match self.interp {
            PolicyInterp::Step => self.ell[i],
            PolicyInterp::Linear => {
                let a = (w - self.w[i]) / (self.w[i + 1] - self.w[i]);
                self.ell[i] + a * (self.ell[i + 1] - self.ell[i])
            }
        }
    }

    fn check_cap(&self, costs: &CostSpec) -> Result<()> {
        let cap = costs.max_leverage();
        if self.max_value() > cap * (1.0 + CAP_EPS) {
            return Err(Error::PolicyOutOfRange {
                value: self.max_value(),
                cap,
            });
        }
        Ok(())
    }
}

/// Leverage after holding a fixed position for time `dt` while `S` grows at unit rate.
#[inline]
pub fn hold_leverage(l: f64, dt: f64) -> f64 {
    let e = dt.exp();
    l * e / (1.0 - l + l * e)
}

/// `ln(book_{t+dt} / book_t)` for a position held at leverage `l`.
#[inline]
pub fn log_book_growth(l: f64, dt: f64) -> f64 {
    (l * dt.exp_m1()).ln_1p()
}

/// Growth rate of the book value when leverage is held constant at `ell`.
///
/// For `ell >= 1` keeping leverage constant needs only purchases at the ask,
/// so the book grows at rate `ell`. Below 1 the position must be sold down at
/// the bid, and the cost drags the rate to `ell (1 - λ) / (1 - λ ell)`.
pub fn constant_leverage_growth(ell: f64, costs: &CostSpec) -> f64 {
    if ell >= 1.0 {
        ell
    } else {
        let lambda = costs.lambda();
        ell * (1.0 - lambda) / (1.0 - lambda * ell)
    }
}

fn check_ell(ell: f64, costs: &CostSpec) -> Result<()> {
    let cap = costs.max_leverage();
    if !(ell >= 0.0 && ell <= cap * (1.0 + CAP_EPS)) {
        return Err(invalid(format!("leverage {ell} outside [0, {cap}]")));
    }
    Ok(())
}

/// Keeps leverage at `ell` until the stopping index, then freezes.
///
/// Holdings are `((1-ℓ) x e^{g t}, ℓ x e^{(g-1) t})` with
/// `g = constant_leverage_growth(ℓ)`; for `ℓ >= 1` this is the pure-buy
/// strategy with `g = ℓ`.
pub fn constant_leverage_strategy(x: f64, ell: f64, path: &SamplePath, costs: &CostSpec) -> Result<StrategyPath> {
    if !(x > 0.0) {
        return Err(invalid(format!("endowment must be positive, got {x}")));
    }
    check_ell(ell, costs)?;
    let g = constant_leverage_growth(ell, costs);
    let stop = path.stop_index();
    let t_stop = path.stop_time();
    let (phi0, phi1) = path
        .times()
        .iter()
        .map(|&t| {
            let t = t.min(t_stop);
            ((1.0 - ell) * x * (g * t).exp(), ell * x * ((g - 1.0) * t).exp())
        })
        .unzip();
    debug_assert!(stop < path.len());
    StrategyPath::from_holdings(phi0, phi1, x, 0.0)
}

/// Liquidation value at `tau` of the constant-leverage strategy:
/// `(1 - ℓ λ) x e^{g tau}`.
pub fn terminal_liquidation(x: f64, ell: f64, tau: f64, costs: &CostSpec) -> f64 {
    (1.0 - ell * costs.lambda()) * x * (constant_leverage_growth(ell, costs) * tau).exp()
}

/// Log-utility-optimal constant leverage in the Poisson market,
/// `max((1 - αλ)/λ, 0)`.
pub fn poisson_optimal_leverage(alpha: f64, costs: &CostSpec) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("Poisson intensity must be positive, got {alpha}")));
    }
    let lambda = costs.lambda();
    Ok(((1.0 - alpha * lambda) / lambda).max(0.0))
}

/// Minimal-buy strategy keeping `L_t >= ℓ(W_t)`: never sells, buys at a grid
/// point only what restores the target leverage, and stops trading at the
/// stopping index.
pub fn barrier_strategy(x: f64, policy: &LeveragePolicy, path: &SamplePath, costs: &CostSpec) -> Result<StrategyPath> {
    if !(x > 0.0) {
        return Err(invalid(format!("endowment must be positive, got {x}")));
    }
    if path.kind() != DriverKind::Brownian {
        return Err(invalid("barrier strategies need a Brownian driver"));
    }
    policy.check_cap(costs)?;
    let n = path.len();
    let stop = path.stop_index();
    let mut phi0 = Vec::with_capacity(n);
    let mut phi1 = Vec::with_capacity(n);
    let (mut a, mut b) = (x, 0.0);
    for k in 0..n {
        let s = path.price()[k];
        if k < stop {
            let book = a + b * s;
            let target = policy.eval(path.driver()[k]);
            if b * s < target * book {
                b = target * book / s;
                a = (1.0 - target) * book;
            }
        }
        phi0.push(a);
        phi1.push(b);
    }
    StrategyPath::from_holdings(phi0, phi1, x, 0.0)
}

/// How a policy simulation ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyOutcome {
    /// `tau` reached; `log_liquidation = log_book + ln(1 - λ L_tau)`.
    Absorbed {
        log_book: f64,
        leverage: f64,
        log_liquidation: f64,
    },
    /// The stop rule fired first (leverage is the pre-trade value).
    Stopped {
        log_book: f64,
        leverage: f64,
        w: f64,
        t: f64,
    },
    Censored,
}

/// Scalar simulation of a minimal-buy strategy on a Brownian walk, with the
/// book value normalized to 1 at the start. `target` gives the leverage
/// floor at the current level; `stop` is checked at each grid point before
/// trading.
pub fn run_policy<R, T, S>(
    walk: &mut BrownianWalk,
    l0: f64,
    costs: &CostSpec,
    rng: &mut R,
    mut target: T,
    mut stop: S,
) -> PolicyOutcome
where
    R: rand::Rng + ?Sized,
    T: FnMut(f64) -> f64,
    S: FnMut(&BrownianWalk) -> bool,
{
    let dt = walk.dt();
    let lambda = costs.lambda();
    let mut l = l0;
    let mut log_book = 0.0;
    if walk.status() == WalkStatus::Absorbed {
        return PolicyOutcome::Absorbed {
            log_book,
            leverage: l,
            log_liquidation: (1.0 - lambda * l).ln(),
        };
    }
    loop {
        if stop(walk) {
            return PolicyOutcome::Stopped {
                log_book,
                leverage: l,
                w: walk.level(),
                t: walk.time(),
            };
        }
        l = l.max(target(walk.level()));
        log_book += log_book_growth(l, dt);
        l = hold_leverage(l, dt);
        match walk.step(rng) {
            WalkStatus::Alive => {}
            WalkStatus::Absorbed => {
                return PolicyOutcome::Absorbed {
                    log_book,
                    leverage: l,
                    log_liquidation: log_book + (1.0 - lambda * l).ln(),
                }
            }
            WalkStatus::Censored => return PolicyOutcome::Censored,
        }
    }
}

/// Strategy families that [`expected_log_utility_mc`] can evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum StrategyFactory {
    BondOnly,
    ConstantLeverage {
        ell: f64,
    },
    Barrier {
        policy: LeveragePolicy,
    },
    /// Maximal leverage until `W` first reaches `level`, then `policy`.
    MaxLeverageUntil {
        level: f64,
        policy: LeveragePolicy,
    },
}

/// Log of the terminal liquidation value of one simulated path,
/// `-inf` when it is not positive.
pub fn sample_log_liquidation<R: rand::Rng + ?Sized>(
    factory: &StrategyFactory,
    model: &MarketModel,
    x: f64,
    costs: &CostSpec,
    rng: &mut R,
) -> Result<f64> {
    let log = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    match factory {
        StrategyFactory::BondOnly => Ok(x.ln()),
        StrategyFactory::ConstantLeverage { ell } => {
            let tau = match model {
                MarketModel::Brownian(b) => sample_tau_brownian(b.w, rng),
                MarketModel::Poisson(p) => sample_tau_poisson(p.alpha, rng),
            };
            Ok(log(terminal_liquidation(x, *ell, tau, costs)))
        }
        StrategyFactory::Barrier { policy } => {
            let MarketModel::Brownian(spec) = model else {
                return Err(invalid("barrier strategies need a Brownian driver"));
            };
            let mut walk = BrownianWalk::new(spec);
            match run_policy(&mut walk, 0.0, costs, rng, |w| policy.eval(w), |_| false) {
                PolicyOutcome::Absorbed { log_liquidation, .. } => Ok(x.ln() + log_liquidation),
                PolicyOutcome::Censored => Err(Error::Censored { t_cap: spec.t_cap }),
                PolicyOutcome::Stopped { .. } => unreachable!("no stop rule"),
            }
        }
        StrategyFactory::MaxLeverageUntil { level, policy } => {
            let MarketModel::Brownian(spec) = model else {
                return Err(invalid("barrier strategies need a Brownian driver"));
            };
            let cap = costs.max_leverage();
            let mut crossed = false;
            let mut walk = BrownianWalk::new(spec);
            let target = |w: f64| {
                crossed |= w <= *level;
                if crossed {
                    policy.eval(w)
                } else {
                    cap
                }
            };
            match run_policy(&mut walk, 0.0, costs, rng, target, |_| false) {
                PolicyOutcome::Absorbed { log_liquidation, .. } => Ok(x.ln() + log_liquidation),
                PolicyOutcome::Censored => Err(Error::Censored { t_cap: spec.t_cap }),
                PolicyOutcome::Stopped { .. } => unreachable!("no stop rule"),
            }
        }
    }
}

fn validate_factory(factory: &StrategyFactory, costs: &CostSpec) -> Result<()> {
    match factory {
        StrategyFactory::BondOnly => Ok(()),
        StrategyFactory::ConstantLeverage { ell } => check_ell(*ell, costs),
        StrategyFactory::Barrier { policy } | StrategyFactory::MaxLeverageUntil { policy, .. } => {
            policy.check_cap(costs)
        }
    }
}

/// Mean and standard error of `log V^liq_tau` over `n` independent paths.
/// Paths with non-positive terminal liquidation value are counted in
/// `non_finite` and force the mean to `-inf`.
pub fn expected_log_utility_mc(
    factory: &StrategyFactory,
    model: &MarketModel,
    x: f64,
    costs: &CostSpec,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(x > 0.0) {
        return Err(invalid(format!("endowment must be positive, got {x}")));
    }
    model.validate()?;
    validate_factory(factory, costs)?;
    mc::estimate(n, seed, |rng: &mut McRng| {
        sample_log_liquidation(factory, model, x, costs, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::{poisson_path_with_tau, sample_brownian_market, BrownianMarketSpec, PoissonMarketSpec};
    use crate::mc::stream_rng;
    use crate::trading::{check_admissible, check_self_financing, leverage, liquidation_value};

    fn half() -> CostSpec {
        CostSpec::new(0.5).unwrap()
    }

    #[test]
    fn policy_eval_and_validation() {
        let c = half();
        let p = LeveragePolicy::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], &c).unwrap();
        assert_eq!(p.eval(-1.0), 0.0);
        assert!((p.eval(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(p.eval(5.0), 2.0);
        let step = p.clone().with_interp(PolicyInterp::Step);
        assert_eq!(step.eval(0.5), 0.0);
        assert_eq!(step.eval(1.0), 1.0);
        assert!(LeveragePolicy::new(vec![0.0, 1.0], vec![1.0, 0.5], &c).is_err());
        assert!(matches!(
            LeveragePolicy::new(vec![0.0], vec![2.5], &c),
            Err(Error::PolicyOutOfRange { .. })
        ));
    }

    #[test]
    fn hold_update_matches_frozen_holdings() {
        for &l in &[0.0, 0.3, 1.0, 1.7, 2.0] {
            let (a, b) = (1.0 - l, l);
            let dt: f64 = 0.37;
            let s = dt.exp();
            let direct = leverage(a, b, s).unwrap();
            assert!((hold_leverage(l, dt) - direct).abs() < 1e-14);
            assert!((log_book_growth(l, dt) - (a + b * s).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_leverage_is_all_bond() {
        let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(0.05, 0.0).unwrap();
        let path = poisson_path_with_tau(&spec, 2.0).unwrap();
        let s = constant_leverage_strategy(3.0, 0.0, &path, &half()).unwrap();
        assert!(s.phi0().iter().all(|&v| v == 3.0));
        assert!(s.phi1().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_leverage_closed_form() {
        let c = half();
        let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(0.01, 0.0).unwrap();
        let path = poisson_path_with_tau(&spec, 1.5).unwrap();
        let s = constant_leverage_strategy(1.0, 2.0, &path, &c).unwrap();
        for (k, &t) in path.times().iter().enumerate() {
            assert!((s.phi0()[k] - (1.0 - 2.0) * (2.0 * t).exp()).abs() < 1e-12 * (2.0 * t).exp());
            assert!((s.phi1()[k] - 2.0 * t.exp()).abs() < 1e-12 * t.exp());
        }
        assert!(s.sells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_leverage_holds_target() {
        let c = CostSpec::new(0.3).unwrap();
        let spec = BrownianMarketSpec::new(2.0, 1e-3).unwrap();
        let path = sample_brownian_market(&spec, &mut stream_rng(5, 0)).unwrap();
        for &ell in &[0.0, 0.4, 1.0, 2.5, 1.0 / 0.3] {
            let s = constant_leverage_strategy(1.0, ell, &path, &c).unwrap();
            for k in 0..=path.stop_index() {
                let l = leverage(s.phi0()[k], s.phi1()[k], path.price()[k]).unwrap();
                assert!((l - ell).abs() < 1e-10, "ell {ell} k {k} got {l}");
            }
            assert!(check_admissible(&s, &path, &c).unwrap().admissible);
        }
    }

    #[test]
    fn constant_leverage_below_one_is_self_financing_at_the_bid() {
        let c = CostSpec::new(0.4).unwrap();
        let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(1e-3, 0.0).unwrap();
        let path = poisson_path_with_tau(&spec, 2.0).unwrap();
        let s = constant_leverage_strategy(1.0, 0.5, &path, &c).unwrap();
        assert!(s.buys()[1..].iter().all(|&b| b == 0.0));
        // Sells are booked at the bid; sampling the continuous strategy at the
        // grid leaves an O(dt²) per-step error.
        let rep = check_self_financing(&s, &path, &c, 1e-6).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn terminal_liquidation_examples() {
        let c = half();
        assert_eq!(terminal_liquidation(2.0, 0.0, 3.0, &c), 2.0);
        assert_eq!(terminal_liquidation(1.0, 2.0, 3.0, &c), 0.0);
        let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(0.01, 0.0).unwrap();
        let path = poisson_path_with_tau(&spec, 0.8).unwrap();
        for &ell in &[0.0, 0.5, 1.0, 1.5] {
            let s = constant_leverage_strategy(1.3, ell, &path, &c).unwrap();
            let k = path.stop_index();
            let v = liquidation_value(s.phi0()[k], s.phi1()[k], path.price()[k], &c).unwrap();
            let closed = terminal_liquidation(1.3, ell, 0.8, &c);
            assert!((v - closed).abs() < 1e-12, "{v} vs {closed}");
        }
    }

    #[test]
    fn poisson_optimal_leverage_examples() {
        assert!((poisson_optimal_leverage(1.0, &half()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            poisson_optimal_leverage(2.0, &CostSpec::new(0.6).unwrap()).unwrap(),
            0.0
        );
        assert!(poisson_optimal_leverage(0.0, &half()).is_err());
    }

    #[test]
    fn poisson_optimum_matches_grid_argmax_of_objective() {
        // f(ℓ) = ln x + ln(1 - ℓλ) + ℓ/α maximized on a fine grid of [0, 1/λ).
        for &(alpha, lambda) in &[(1.0, 0.5), (0.5, 0.2), (0.8, 0.9), (2.0, 0.6)] {
            let c = CostSpec::new(lambda).unwrap();
            let cap = 1.0 / lambda;
            let m = 200_000;
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
            for i in 0..m {
                let l = cap * i as f64 / m as f64;
                let f = (1.0 - l * lambda).ln() + l / alpha;
                if f > best {
                    best = f;
                    arg = l;
                }
            }
            let closed = poisson_optimal_leverage(alpha, &c).unwrap();
            assert!(
                (closed - arg).abs() <= 2.0 * cap / m as f64,
                "alpha {alpha} lambda {lambda}: {closed} vs {arg}"
            );
        }
    }

    #[test]
    fn zero_policy_never_trades() {
        let c = half();
        let path = sample_brownian_market(&BrownianMarketSpec::new(1.0, 1e-3).unwrap(), &mut stream_rng(2, 0)).unwrap();
        let s = barrier_strategy(1.0, &LeveragePolicy::constant(0.0, &c).unwrap(), &path, &c).unwrap();
        assert!(s.phi0().iter().all(|&v| v == 1.0));
        assert!(s.phi1().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn barrier_strategy_properties() {
        let c = half();
        let pol = LeveragePolicy::new(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.5, 1.5, 2.0], &c).unwrap();
        let path = sample_brownian_market(&BrownianMarketSpec::new(2.5, 1e-3).unwrap(), &mut stream_rng(8, 0)).unwrap();
        let s = barrier_strategy(1.0, &pol, &path, &c).unwrap();
        assert!(s.sells().iter().all(|&v| v == 0.0));
        assert!(s.phi1().windows(2).all(|w| w[1] >= w[0]));
        assert!(check_admissible(&s, &path, &c).unwrap().admissible);
        let rep = check_self_financing(&s, &path, &c, 1e-12).unwrap();
        assert!(rep.passed, "{rep:?}");
        for k in 0..path.stop_index() {
            if s.buys()[k] > 0.0 {
                let l = leverage(s.phi0()[k], s.phi1()[k], path.price()[k]).unwrap();
                assert!((l - pol.eval(path.driver()[k])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn barrier_rejects_poisson_paths_and_oversized_policies() {
        let c = half();
        let spec = PoissonMarketSpec::new(1.0).unwrap();
        let path = poisson_path_with_tau(&spec, 1.0).unwrap();
        let pol = LeveragePolicy::constant(1.0, &c).unwrap();
        assert!(barrier_strategy(1.0, &pol, &path, &c).is_err());
        let bpath =
            sample_brownian_market(&BrownianMarketSpec::new(1.0, 1e-2).unwrap(), &mut stream_rng(1, 0)).unwrap();
        let tight = CostSpec::new(0.8).unwrap();
        let big = LeveragePolicy::constant(2.0, &c).unwrap();
        assert!(matches!(
            barrier_strategy(1.0, &big, &bpath, &tight),
            Err(Error::PolicyOutOfRange { .. })
        ));
    }

    #[test]
    fn ordered_policies_give_ordered_holdings() {
        let c = half();
        let lo = LeveragePolicy::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.8, 1.6], &c).unwrap();
        let hi = LeveragePolicy::new(vec![0.0, 1.0, 3.0], vec![0.2, 1.2, 2.0], &c).unwrap();
        for seed in 0..5 {
            let path =
                sample_brownian_market(&BrownianMarketSpec::new(2.0, 1e-3).unwrap(), &mut stream_rng(seed, 0)).unwrap();
            let a = barrier_strategy(1.0, &lo, &path, &c).unwrap();
            let b = barrier_strategy(1.0, &hi, &path, &c).unwrap();
            for k in 0..path.len() {
                assert!(a.phi1()[k] <= b.phi1()[k] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn scalar_runner_matches_materialized_barrier_strategy() {
        let c = half();
        let pol = LeveragePolicy::new(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.5, 1.5, 2.0], &c).unwrap();
        let spec = BrownianMarketSpec::new(2.0, 1e-3).unwrap();
        let path = sample_brownian_market(&spec, &mut stream_rng(21, 3)).unwrap();
        let s = barrier_strategy(1.0, &pol, &path, &c).unwrap();
        let k = path.stop_index();
        let liq = liquidation_value(s.phi0()[k], s.phi1()[k], path.price()[k], &c).unwrap();

        let mut walk = BrownianWalk::new(&spec);
        let out = run_policy(&mut walk, 0.0, &c, &mut stream_rng(21, 3), |w| pol.eval(w), |_| false);
        let PolicyOutcome::Absorbed { log_liquidation, .. } = out else {
            panic!("unexpected {out:?}")
        };
        assert!(
            (log_liquidation - liq.ln()).abs() < 1e-9,
            "{log_liquidation} vs {}",
            liq.ln()
        );
    }

    #[test]
    fn maximal_policy_tracks_closed_form_to_first_order() {
        let c = half();
        let pol = LeveragePolicy::constant(2.0, &c).unwrap();
        let mut errs = Vec::new();
        for &dt in &[2e-4, 1e-4] {
            let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(dt, 0.0).unwrap();
            let p = poisson_path_with_tau(&spec, 1.0).unwrap();
            // Reuse the Poisson grid as a Brownian-driven path that never hits zero before t = 1.
            let bpath = SamplePath::new(
                DriverKind::Brownian,
                p.times().to_vec(),
                vec![1.0; p.len()],
                p.price().to_vec(),
                p.stop_index(),
                None,
                false,
            )
            .unwrap();
            let a = barrier_strategy(1.0, &pol, &bpath, &c).unwrap();
            let b = constant_leverage_strategy(1.0, 2.0, &bpath, &c).unwrap();
            let err = (0..bpath.stop_index())
                .map(|k| ((a.phi1()[k] - b.phi1()[k]) / b.phi1()[k]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 2e-4, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!(
            (1.7..2.3).contains(&ratio),
            "first-order convergence expected, {errs:?}"
        );
    }

    #[test]
    fn bond_only_utility_is_exact() {
        let c = half();
        let m = MarketModel::Poisson(PoissonMarketSpec::new(1.0).unwrap());
        let e = expected_log_utility_mc(&StrategyFactory::BondOnly, &m, 2.0, &c, 1000, 1).unwrap();
        assert_eq!(e.mean, 2f64.ln());
        assert_eq!(e.std_err, 0.0);
        let e0 =
            expected_log_utility_mc(&StrategyFactory::ConstantLeverage { ell: 0.0 }, &m, 2.0, &c, 1000, 1).unwrap();
        assert_eq!(e0.mean, 2f64.ln());
        assert_eq!(e0.std_err, 0.0);
    }

    #[test]
    fn maximal_leverage_utility_is_minus_infinity() {
        let c = half();
        let m = MarketModel::Poisson(PoissonMarketSpec::new(1.0).unwrap());
        let e = expected_log_utility_mc(&StrategyFactory::ConstantLeverage { ell: 2.0 }, &m, 1.0, &c, 100, 1).unwrap();
        assert_eq!(e.mean, f64::NEG_INFINITY);
        assert_eq!(e.non_finite, 100);
    }

    #[test]
    fn brownian_utility_respects_upper_bound() {
        // Any admissible strategy has V^liq_tau <= x e^{tau/λ}, so E[log] <= ln x + w/λ.
        let c = half();
        let m = MarketModel::Brownian(BrownianMarketSpec::new(3.0, 1e-2).unwrap());
        for ell in [0.5, 1.0, 1.5, 1.9] {
            let e =
                expected_log_utility_mc(&StrategyFactory::ConstantLeverage { ell }, &m, 1.0, &c, 20_000, 4).unwrap();
            assert!(e.mean <= 6.0 + 3.0 * e.std_err);
        }
    }
}

//! Trading calculus under proportional transaction costs.
//!
//! Holdings are right-continuous step functions on the simulation grid: the
//! value stored at grid index `k` is the position just after trading at
//! `times[k]`. The endowment held before the time-zero trade is stored
//! separately (`phi0_pre`, `phi1_pre`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default per-step tolerance of [`check_self_financing`], relative to the
/// running book scale `1 + |phi0| + |phi1| S`.
pub const DEFAULT_SELF_FINANCING_TOL: f64 = 1e-10;

/// Liquidation values above `-ADMISSIBILITY_EPS * scale` count as non-negative.
pub const ADMISSIBILITY_EPS: f64 = 1e-12;

/// Proportional transaction cost: selling pays `(1 - lambda) S`, buying costs `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    lambda: f64,
}

impl CostSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest admissible leverage of a long position, `1 / lambda`.
    pub fn max_leverage(&self) -> f64 {
        1.0 / self.lambda
    }

    pub fn bid(&self, ask: f64) -> f64 {
        (1.0 - self.lambda) * ask
    }
}

/// What the `driver` column of a [`SamplePath`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    /// Drifted Brownian level `W_t = w + B_t - t`.
    Brownian,
    /// Poisson count `N_{t ∧ tau}` in `{0, 1}`.
    Poisson,
}

/// One discretized realization of a market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    kind: DriverKind,
    times: Vec<f64>,
    driver: Vec<f64>,
    price: Vec<f64>,
    stop_index: usize,
    seed: Option<u64>,
    censored: bool,
}

impl SamplePath {
    pub fn new(
        kind: DriverKind,
        times: Vec<f64>,
        driver: Vec<f64>,
        price: Vec<f64>,
        stop_index: usize,
        seed: Option<u64>,
        censored: bool,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(invalid("sample path needs at least one grid point"));
        }
        if driver.len() != n || price.len() != n {
            return Err(Error::GridMismatch(format!(
                "times {n}, driver {}, price {}",
                driver.len(),
                price.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(invalid(format!("time grid must start at 0, got {}", times[0])));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("time grid not strictly increasing at index {}", k + 1)));
        }
        if let Some((index, &p)) = price.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::NonPositivePrice { index, price: p });
        }
        if (price[0] - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("price must start at 1, got {}", price[0])));
        }
        if stop_index >= n {
            return Err(invalid(format!("stop_index {stop_index} outside grid of {n} points")));
        }
        let frozen = price[stop_index];
        if price[stop_index..].iter().any(|&p| p != frozen) {
            return Err(invalid("price must be constant from stop_index on"));
        }
        Ok(Self {
            kind,
            times,
            driver,
            price,
            stop_index,
            seed,
            censored,
        })
    }

    pub fn kind(&self) -> DriverKind {
        self.kind
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn driver(&self) -> &[f64] {
        &self.driver
    }
    pub fn price(&self) -> &[f64] {
        &self.price
    }
    pub fn stop_index(&self) -> usize {
        self.stop_index
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
    pub fn censored(&self) -> bool {
        self.censored
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid approximation of the stopping time.
    pub fn stop_time(&self) -> f64 {
        self.times[self.stop_index]
    }

    /// Last grid index with `times[k] <= t` (0 for negative `t`).
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Largest time-step of the grid.
    pub fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Holdings `(phi0, phi1)` in bond and stock on a grid, with the minimal
/// Jordan–Hahn decomposition of the stock increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPath {
    phi0: Vec<f64>,
    phi1: Vec<f64>,
    phi0_pre: f64,
    phi1_pre: f64,
    buys: Vec<f64>,
    sells: Vec<f64>,
}

impl StrategyPath {
    /// Builds a strategy from holdings, deriving the minimal buy/sell split.
    pub fn from_holdings(phi0: Vec<f64>, phi1: Vec<f64>, phi0_pre: f64, phi1_pre: f64) -> Result<Self> {
        if phi0.len() != phi1.len() || phi0.is_empty() {
            return Err(Error::GridMismatch(format!("phi0 {}, phi1 {}", phi0.len(), phi1.len())));
        }
        let mut buys = Vec::with_capacity(phi1.len());
        let mut sells = Vec::with_capacity(phi1.len());
        let mut prev = phi1_pre;
        for &q in &phi1 {
            let d = q - prev;
            buys.push(d.max(0.0));
            sells.push((-d).max(0.0));
            prev = q;
        }
        Ok(Self {
            phi0,
            phi1,
            phi0_pre,
            phi1_pre,
            buys,
            sells,
        })
    }

    /// Builds a strategy from explicit increments, canonicalizing any
    /// simultaneous buy and sell in one step into their net trade.
    pub fn from_increments(phi0: Vec<f64>, phi0_pre: f64, phi1_pre: f64, buys: &[f64], sells: &[f64]) -> Result<Self> {
        if buys.len() != sells.len() || buys.len() != phi0.len() {
            return Err(Error::GridMismatch(format!(
                "phi0 {}, buys {}, sells {}",
                phi0.len(),
                buys.len(),
                sells.len()
            )));
        }
        if buys.iter().chain(sells).any(|&v| !(v >= 0.0)) {
            return Err(invalid("buy and sell increments must be non-negative"));
        }
        let mut phi1 = Vec::with_capacity(buys.len());
        let mut q = phi1_pre;
        for (&b, &s) in buys.iter().zip(sells) {
            q += b - s;
            phi1.push(q);
        }
        let (nb, ns) = canonicalize_increments(buys, sells);
        Ok(Self {
            phi0,
            phi1,
            phi0_pre,
            phi1_pre,
            buys: nb,
            sells: ns,
        })
    }

    /// Strategy that never trades after holding `(phi0_pre, phi1_pre)`.
    pub fn constant(n: usize, phi0: f64, phi1: f64, phi0_pre: f64, phi1_pre: f64) -> Result<Self> {
        Self::from_holdings(vec![phi0; n], vec![phi1; n], phi0_pre, phi1_pre)
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }
    pub fn phi1(&self) -> &[f64] {
        &self.phi1
    }
    pub fn phi0_pre(&self) -> f64 {
        self.phi0_pre
    }
    pub fn phi1_pre(&self) -> f64 {
        self.phi1_pre
    }
    pub fn buys(&self) -> &[f64] {
        &self.buys
    }
    pub fn sells(&self) -> &[f64] {
        &self.sells
    }
    pub fn len(&self) -> usize {
        self.phi0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.phi0.is_empty()
    }

    /// Frictionless book value `phi0 + phi1 S` at every grid point.
    pub fn book_values(&self, path: &SamplePath) -> Result<Vec<f64>> {
        ensure_same_grid(self, path)?;
        Ok(self
            .phi0
            .iter()
            .zip(&self.phi1)
            .zip(path.price())
            .map(|((a, b), s)| a + b * s)
            .collect())
    }
}

/// Nets simultaneous buys and sells so at most one side is positive per step.
pub fn canonicalize_increments(buys: &[f64], sells: &[f64]) -> (Vec<f64>, Vec<f64>) {
    buys.iter()
        .zip(sells)
        .map(|(&b, &s)| ((b - s).max(0.0), (s - b).max(0.0)))
        .unzip()
}

/// Liquidation values along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidationSeries {
    pub values: Vec<f64>,
}

/// `phi0 + (phi1)^+ (1 - lambda) s - (phi1)^- s`.
pub fn liquidation_value(phi0: f64, phi1: f64, s: f64, costs: &CostSpec) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonPositivePrice { index: 0, price: s });
    }
    Ok(liquidation_unchecked(phi0, phi1, s, costs.lambda()))
}

#[inline]
pub(crate) fn liquidation_unchecked(phi0: f64, phi1: f64, s: f64, lambda: f64) -> f64 {
    if phi1 >= 0.0 {
        phi0 + phi1 * (1.0 - lambda) * s
    } else {
        phi0 + phi1 * s
    }
}

pub fn liquidation_series(strategy: &StrategyPath, path: &SamplePath, costs: &CostSpec) -> Result<LiquidationSeries> {
    ensure_same_grid(strategy, path)?;
    let values = strategy
        .phi0
        .iter()
        .zip(&strategy.phi1)
        .zip(path.price())
        .map(|((&a, &b), &s)| liquidation_unchecked(a, b, s, costs.lambda()))
        .collect();
    Ok(LiquidationSeries { values })
}

/// Stock value over frictionless book value, `phi1 s / (phi0 + phi1 s)`.
pub fn leverage(phi0: f64, phi1: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonPositivePrice { index: 0, price: s });
    }
    let book = phi0 + phi1 * s;
    if book == 0.0 {
        return Err(Error::UndefinedLeverage);
    }
    Ok(phi1 * s / book)
}

/// Outcome of [`check_self_financing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfFinancingReport {
    pub passed: bool,
    /// Largest slack relative to the running book scale; positive means violation.
    pub worst_slack: f64,
    /// Grid index of `worst_slack` (0 is the time-zero jump).
    pub worst_index: usize,
    /// Largest absolute slack, same sign convention.
    pub worst_abs_slack: f64,
    pub tol: f64,
}

/// Verifies `Δphi0 <= -S Δphi1↑ + (1 - λ) S Δphi1↓` at every grid step,
/// including the jump from the pre-zero endowment at index 0.
///
/// Slack at step `k` is the left side minus the right side, scaled by
/// `1 + |phi0_{k-1}| + |phi1_{k-1}| S_k`. The check passes iff the largest
/// scaled slack is at most `tol`.
pub fn check_self_financing(
    strategy: &StrategyPath,
    path: &SamplePath,
    costs: &CostSpec,
    tol: f64,
) -> Result<SelfFinancingReport> {
    ensure_same_grid(strategy, path)?;
    let lambda = costs.lambda();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_abs = f64::NEG_INFINITY;
    let mut worst_index = 0;
    let mut prev0 = strategy.phi0_pre;
    let mut prev1 = strategy.phi1_pre;
    for k in 0..strategy.len() {
        let s = path.price()[k];
        let d0 = strategy.phi0[k] - prev0;
        let slack = d0 + s * strategy.buys[k] - (1.0 - lambda) * s * strategy.sells[k];
        let scale = 1.0 + prev0.abs() + prev1.abs() * s;
        let rel = slack / scale;
        if rel > worst {
            worst = rel;
            worst_index = k;
        }
        worst_abs = worst_abs.max(slack);
        prev0 = strategy.phi0[k];
        prev1 = strategy.phi1[k];
    }
    Ok(SelfFinancingReport {
        passed: worst <= tol,
        worst_slack: worst,
        worst_index,
        worst_abs_slack: worst_abs,
        tol,
    })
}

/// Outcome of [`check_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub first_violation: Option<usize>,
    pub min_liquidation_value: f64,
}

/// True iff the liquidation value is non-negative at every grid point.
pub fn check_admissible(strategy: &StrategyPath, path: &SamplePath, costs: &CostSpec) -> Result<AdmissibilityReport> {
    let series = liquidation_series(strategy, path, costs)?;
    let mut first_violation = None;
    let mut min_value = f64::INFINITY;
    for (k, &v) in series.values.iter().enumerate() {
        min_value = min_value.min(v);
        let scale = 1.0 + strategy.phi0[k].abs() + strategy.phi1[k].abs() * path.price()[k];
        if first_violation.is_none() && v < -ADMISSIBILITY_EPS * scale {
            first_violation = Some(k);
        }
    }
    Ok(AdmissibilityReport {
        admissible: first_violation.is_none(),
        first_violation,
        min_liquidation_value: min_value,
    })
}

pub(crate) fn ensure_same_grid(strategy: &StrategyPath, path: &SamplePath) -> Result<()> {
    if strategy.len() != path.len() {
        return Err(Error::GridMismatch(format!(
            "strategy has {} points, path has {}",
            strategy.len(),
            path.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_path(n: usize, dt: f64) -> SamplePath {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let price: Vec<f64> = times.iter().map(|t| t.exp()).collect();
        SamplePath::new(DriverKind::Brownian, times, vec![1.0; n], price, n - 1, None, false).unwrap()
    }

    #[test]
    fn cost_spec_rejects_out_of_range() {
        assert!(CostSpec::new(0.0).is_err());
        assert!(CostSpec::new(1.0).is_err());
        assert!(CostSpec::new(f64::NAN).is_err());
        assert_eq!(CostSpec::new(0.25).unwrap().max_leverage(), 4.0);
    }

    #[test]
    fn liquidation_value_examples() {
        let half = CostSpec::new(0.5).unwrap();
        assert_eq!(liquidation_value(1.0, 0.0, 5.0, &half).unwrap(), 1.0);
        assert_eq!(liquidation_value(1.0 - 2.0, 2.0, 1.0, &half).unwrap(), 0.0);
        let small = CostSpec::new(0.01).unwrap();
        assert_eq!(liquidation_value(0.0, -1.0, 2.0, &small).unwrap(), -2.0);
        assert!(matches!(
            liquidation_value(1.0, 1.0, 0.0, &half),
            Err(Error::NonPositivePrice { .. })
        ));
    }

    #[test]
    fn leverage_examples() {
        assert_eq!(leverage(3.0, 0.0, 7.0).unwrap(), 0.0);
        assert_eq!(leverage(1.0 - 2.0, 2.0, 1.0).unwrap(), 2.0);
        assert_eq!(leverage(0.5, 0.5, 1.0).unwrap(), 0.5);
        assert!(matches!(leverage(1.0, -1.0, 1.0), Err(Error::UndefinedLeverage)));
    }

    #[test]
    fn buy_and_hold_booked_at_ask_has_zero_slack() {
        let path = flat_path(50, 0.01);
        let costs = CostSpec::new(0.3).unwrap();
        let q = 0.7;
        let strat = StrategyPath::constant(path.len(), 1.0 - q, q, 1.0, 0.0).unwrap();
        let rep = check_self_financing(&strat, &path, &costs, DEFAULT_SELF_FINANCING_TOL).unwrap();
        assert!(rep.passed);
        assert!(rep.worst_slack.abs() < 1e-15);
    }

    #[test]
    fn selling_at_ask_is_caught() {
        let path = flat_path(10, 0.1);
        let costs = CostSpec::new(0.2).unwrap();
        // Hold one share, sell it at index 5 but credit the ask price.
        let mut phi0 = vec![0.0; 10];
        let mut phi1 = vec![1.0; 10];
        let s5 = path.price()[5];
        for k in 5..10 {
            phi0[k] = s5;
            phi1[k] = 0.0;
        }
        let strat = StrategyPath::from_holdings(phi0, phi1, 1.0, 0.0).unwrap();
        let rep = check_self_financing(&strat, &path, &costs, DEFAULT_SELF_FINANCING_TOL).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.worst_index, 5);
        assert!((rep.worst_abs_slack - 0.2 * s5).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let path = flat_path(10, 0.1);
        let costs = CostSpec::new(0.2).unwrap();
        let strat = StrategyPath::constant(9, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            check_self_financing(&strat, &path, &costs, 1e-10),
            Err(Error::GridMismatch(_))
        ));
        assert!(check_admissible(&strat, &path, &costs).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let path = flat_path(100, 0.01);
        let costs = CostSpec::new(0.5).unwrap();
        let bond = StrategyPath::constant(path.len(), 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(check_admissible(&bond, &path, &costs).unwrap().admissible);

        let maxed = StrategyPath::constant(path.len(), 1.0 - 2.0, 2.0, 1.0, 0.0).unwrap();
        let rep = check_admissible(&maxed, &path, &costs).unwrap();
        assert!(rep.admissible);
        let liq = liquidation_series(&maxed, &path, &costs).unwrap();
        assert_eq!(liq.values[0], 0.0);
        assert!(liq.values[1..].iter().all(|&v| v > 0.0));

        let over = StrategyPath::constant(path.len(), 1.0 - 4.0, 4.0, 1.0, 0.0).unwrap();
        let rep = check_admissible(&over, &path, &costs).unwrap();
        assert!(!rep.admissible);
        assert_eq!(rep.first_violation, Some(0));
        assert!((rep.min_liquidation_value - (-1.0)).abs() < 1e-12 || rep.min_liquidation_value < -1.0);
    }

    #[test]
    fn increments_are_canonicalized() {
        let s = StrategyPath::from_increments(vec![1.0; 3], 1.0, 0.0, &[0.5, 0.2, 0.0], &[0.1, 0.3, 0.0]).unwrap();
        assert_eq!(s.buys(), &[0.4, 0.0, 0.0]);
        assert!((s.sells()[1] - 0.1).abs() < 1e-15);
        assert!((s.phi1()[1] - 0.3).abs() < 1e-15);
        for k in 0..3 {
            assert!(s.buys()[k] == 0.0 || s.sells()[k] == 0.0);
        }
    }

    #[test]
    fn sample_path_invariants_enforced() {
        let t = vec![0.0, 0.1, 0.2];
        assert!(SamplePath::new(
            DriverKind::Poisson,
            t.clone(),
            vec![0.0; 3],
            vec![1.0, 1.1, 1.2],
            1,
            None,
            false
        )
        .is_err());
        assert!(SamplePath::new(
            DriverKind::Poisson,
            t.clone(),
            vec![0.0; 3],
            vec![1.0, -1.0, -1.0],
            1,
            None,
            false
        )
        .is_err());
        assert!(SamplePath::new(
            DriverKind::Poisson,
            vec![0.0, 0.1, 0.1],
            vec![0.0; 3],
            vec![1.0; 3],
            1,
            None,
            false
        )
        .is_err());
        assert!(SamplePath::new(
            DriverKind::Poisson,
            t,
            vec![0.0; 3],
            vec![1.0, 1.1, 1.1],
            1,
            None,
            false
        )
        .is_ok());
    }

    proptest! {
        #[test]
        fn liquidation_is_positively_homogeneous(a in -10.0f64..10.0, b in -10.0f64..10.0, s in 0.01f64..10.0, c in 0.0f64..5.0, lam in 0.01f64..0.99) {
            let costs = CostSpec::new(lam).unwrap();
            let v = liquidation_value(a, b, s, &costs).unwrap();
            let vc = liquidation_value(c * a, c * b, s, &costs).unwrap();
            prop_assert!((vc - c * v).abs() <= 1e-9 * (1.0 + vc.abs()));
        }

        #[test]
        fn liquidation_below_book_for_long_positions(a in -10.0f64..10.0, b in 0.0f64..10.0, s in 0.01f64..10.0, lam in 0.01f64..0.99) {
            let costs = CostSpec::new(lam).unwrap();
            let v = liquidation_value(a, b, s, &costs).unwrap();
            let book = a + b * s;
            prop_assert!(v <= book + 1e-12);
            if b > 0.0 {
                prop_assert!(v < book);
            } else {
                prop_assert_eq!(v, book);
            }
        }

        #[test]
        fn admissible_iff_leverage_below_cap(l in 0.0f64..6.0, book in 0.1f64..10.0, s in 0.1f64..10.0, lam in 0.05f64..0.95) {
            let costs = CostSpec::new(lam).unwrap();
            let phi1 = l * book / s;
            let phi0 = book - phi1 * s;
            let v = liquidation_value(phi0, phi1, s, &costs).unwrap();
            let lev = leverage(phi0, phi1, s).unwrap();
            let margin = 1e-9 * (1.0 + phi0.abs() + phi1 * s);
            if v > margin {
                prop_assert!(lev <= costs.max_leverage() + 1e-9);
            } else if v < -margin {
                prop_assert!(lev > costs.max_leverage() - 1e-9);
            }
        }

        #[test]
        fn pure_buys_at_ask_pass(q in proptest::collection::vec(0.0f64..1.0, 1..40), lam in 0.01f64..0.99) {
            let n = q.len();
            let path = flat_path(n, 0.05);
            let costs = CostSpec::new(lam).unwrap();
            let mut phi1 = Vec::with_capacity(n);
            let mut phi0 = Vec::with_capacity(n);
            let (mut a, mut b) = (5.0, 0.0);
            for (k, dq) in q.iter().enumerate() {
                b += dq;
                a -= dq * path.price()[k];
                phi0.push(a);
                phi1.push(b);
            }
            let strat = StrategyPath::from_holdings(phi0, phi1, 5.0, 0.0).unwrap();
            let rep = check_self_financing(&strat, &path, &costs, DEFAULT_SELF_FINANCING_TOL).unwrap();
            prop_assert!(rep.passed, "slack {}", rep.worst_slack);
        }
    }
}

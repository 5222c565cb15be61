//! Dual objects: consistent price systems, supermartingale deflators, the
//! statistical tests that check them, and the Fenchel duality gap for the
//! Poisson market.
//!
//! Also hosts the two frictionless demonstrations for the Brownian market:
//! buy-and-hold against the candidate shadow price yields an unbounded
//! profit, and buy-and-hold gains are unbounded in probability without
//! downside risk.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markets::{
    sample_inverse_gaussian, sample_poisson_market, sample_tau_poisson, MarketModel, PoissonMarketSpec,
};
use crate::mc::{self, z_score, McRng};
use crate::strategies::{constant_leverage_strategy, poisson_optimal_leverage, terminal_liquidation};
use crate::trading::{check_admissible, liquidation_value, CostSpec, DriverKind, SamplePath, StrategyPath};

/// Default two-sided z threshold for the statistical checks.
pub const Z_THRESHOLD: f64 = 3.0;

/// A dual pair `(Y⁰, Y¹)` sampled on a path grid, possibly shorter than the
/// path (e.g. the Brownian optimizer, which is only defined up to `σ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflatorPath {
    y0: Vec<f64>,
    y1: Vec<f64>,
}

impl DeflatorPath {
    pub fn new(y0: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        if y0.is_empty() || y0.len() != y1.len() {
            return Err(Error::GridMismatch(format!("y0 {}, y1 {}", y0.len(), y1.len())));
        }
        if let Some(k) = y0.iter().chain(&y1).position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!(
                "deflator entries must be finite and non-negative (entry {k})"
            )));
        }
        if !(y0[0] > 0.0) {
            return Err(invalid("deflator must start from a positive scale"));
        }
        Ok(Self { y0, y1 })
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }
    pub fn y1(&self) -> &[f64] {
        &self.y1
    }
    pub fn len(&self) -> usize {
        self.y0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.y0.is_empty()
    }

    /// Dual scale `y = Y⁰_0`.
    pub fn scale(&self) -> f64 {
        self.y0[0]
    }

    pub fn scaled(mut self, y: f64) -> Result<Self> {
        if !(y > 0.0) {
            return Err(invalid(format!("dual scale must be positive, got {y}")));
        }
        self.y0.iter_mut().chain(self.y1.iter_mut()).for_each(|v| *v *= y);
        Ok(self)
    }

    /// Implied frictionless price `Y¹/Y⁰` at `k`.
    pub fn ratio(&self, k: usize) -> Result<f64> {
        if self.y0[k] > 0.0 {
            Ok(self.y1[k] / self.y0[k])
        } else {
            Err(Error::DegenerateDeflator {
                index: k,
                y1: self.y1[k],
            })
        }
    }
}

/// Dual optimizer of the Brownian market up to `sigma_index`:
/// `Ŷ⁰_t = e^{-t/λ}`, `Ŷ¹_t = e^{(1-1/λ) t}`.
pub fn brownian_dual_deflator(costs: &CostSpec, path: &SamplePath, sigma_index: usize) -> Result<DeflatorPath> {
    if sigma_index > path.stop_index() {
        return Err(invalid(format!(
            "sigma index {sigma_index} beyond stop index {}",
            path.stop_index()
        )));
    }
    let inv = 1.0 / costs.lambda();
    let ts = &path.times()[..=sigma_index];
    let y0 = ts.iter().map(|&t| (-t * inv).exp()).collect();
    let y1 = ts.iter().map(|&t| ((1.0 - inv) * t).exp()).collect();
    DeflatorPath::new(y0, y1)
}

/// First grid index at which the driver is at or below `level`, capped at
/// the stopping index.
pub fn first_passage_index(path: &SamplePath, level: f64) -> usize {
    let stop = path.stop_index();
    path.driver()[..=stop].iter().position(|&w| w <= level).unwrap_or(stop)
}

fn check_poisson_costs(alpha: f64, costs: &CostSpec) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("Poisson intensity must be positive, got {alpha}")));
    }
    if alpha * costs.lambda() >= 1.0 {
        return Err(invalid(format!(
            "the Poisson dual needs alpha * lambda < 1, got {}",
            alpha * costs.lambda()
        )));
    }
    Ok(())
}

/// `(Ẑ⁰, Ẑ¹)` at `u = t ∧ tau` with `n = N_u ∈ {0, 1}`.
#[inline]
pub fn poisson_dual_pair(alpha: f64, lambda: f64, u: f64, n: f64) -> (f64, f64) {
    let inv = 1.0 / lambda;
    let z0 = (1.0 / (alpha * lambda)).powf(n) * ((alpha - inv) * u).exp();
    let z1 = ((1.0 - lambda) / (alpha * lambda)).powf(n) * ((1.0 + alpha - inv) * u).exp();
    (z0, z1)
}

/// Consistent price system of the Poisson market that is also the dual
/// optimizer. Its ratio is `S` before the jump and `(1-λ) S_tau` after.
pub fn poisson_dual_cps(alpha: f64, costs: &CostSpec, path: &SamplePath) -> Result<DeflatorPath> {
    check_poisson_costs(alpha, costs)?;
    if path.kind() != DriverKind::Poisson {
        return Err(invalid("poisson_dual_cps needs a Poisson path"));
    }
    let tau = path.stop_time();
    let lambda = costs.lambda();
    let (y0, y1) = path
        .times()
        .iter()
        .zip(path.driver())
        .map(|(&t, &n)| poisson_dual_pair(alpha, lambda, t.min(tau), n))
        .unzip();
    DeflatorPath::new(y0, y1)
}

/// Pointwise check that `Y¹/Y⁰` lies in the bid-ask corridor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorReport {
    pub passed: bool,
    /// Largest distance of the ratio outside `[(1-λ)S, S]`.
    pub worst_violation: f64,
    pub worst_index: Option<usize>,
    /// Both components strictly positive at every checked index.
    pub strictly_positive: bool,
}

/// Verifies `(1-λ) S_k <= Y¹_k / Y⁰_k <= S_k` on the deflator's length.
/// Indices with both components zero are skipped.
pub fn cps_corridor_check(deflator: &DeflatorPath, path: &SamplePath, costs: &CostSpec) -> Result<CorridorReport> {
    if deflator.len() > path.len() {
        return Err(Error::GridMismatch(format!(
            "deflator has {} points, path {}",
            deflator.len(),
            path.len()
        )));
    }
    let mut worst = 0.0;
    let mut worst_index = None;
    let mut passed = true;
    let mut strictly_positive = true;
    for k in 0..deflator.len() {
        let (a, b) = (deflator.y0[k], deflator.y1[k]);
        strictly_positive &= a > 0.0 && b > 0.0;
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let r = deflator.ratio(k)?;
        let s = path.price()[k];
        let v = (r - s).max(costs.bid(s) - r).max(0.0);
        if v > 1e-12 * s {
            passed = false;
        }
        if v > worst {
            worst = v;
            worst_index = Some(k);
        }
    }
    Ok(CorridorReport {
        passed,
        worst_violation: worst,
        worst_index,
        strictly_positive,
    })
}

/// One row of a mean test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTestReport {
    pub x0: f64,
    pub threshold: f64,
    pub rows: Vec<MeanRow>,
    pub passed: bool,
}

/// Tests `E[X_{t ∧ tau}] = x0` at each time; `samples[j]` holds the i.i.d.
/// draws at `times[j]`.
pub fn martingale_mean_test(
    times: &[f64],
    samples: &[Vec<f64>],
    x0: f64,
    threshold: f64,
) -> Result<MartingaleTestReport> {
    if times.len() != samples.len() {
        return Err(Error::GridMismatch(format!(
            "{} times, {} sample rows",
            times.len(),
            samples.len()
        )));
    }
    let mut rows = Vec::with_capacity(times.len());
    for (&t, xs) in times.iter().zip(samples) {
        if xs.len() < 2 {
            return Err(Error::DegenerateVariance(format!("{} samples at t = {t}", xs.len())));
        }
        let (mean, se) = mc::mean_se(xs);
        let z = z_score(mean - x0, se);
        rows.push(MeanRow {
            t,
            mean,
            std_err: se,
            z,
            passed: z.abs() < threshold,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(MartingaleTestReport {
        x0,
        threshold,
        rows,
        passed,
    })
}

/// Draws of `Ẑ⁰_{t ∧ tau}` at each of `times` with `tau` exact; one row per time.
pub fn poisson_z0_samples(alpha: f64, costs: &CostSpec, times: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_poisson_costs(alpha, costs)?;
    let lambda = costs.lambda();
    let taus = mc::collect(n, seed, |rng: &mut McRng| Ok(sample_tau_poisson(alpha, rng)))?;
    Ok(times
        .iter()
        .map(|&t| {
            taus.iter()
                .map(|&tau| {
                    let n = if tau <= t { 1.0 } else { 0.0 };
                    poisson_dual_pair(alpha, lambda, t.min(tau), n).0
                })
                .collect()
        })
        .collect())
}

/// `φ⁰_k Y⁰_k + φ¹_k Y¹_k` on the deflator's length.
pub fn deflated_values(strategy: &StrategyPath, deflator: &DeflatorPath) -> Result<Vec<f64>> {
    if deflator.len() > strategy.len() {
        return Err(Error::GridMismatch(format!(
            "deflator has {} points, strategy {}",
            deflator.len(),
            strategy.len()
        )));
    }
    Ok((0..deflator.len())
        .map(|k| strategy.phi0()[k] * deflator.y0[k] + strategy.phi1()[k] * deflator.y1[k])
        .collect())
}

/// Deflated values sampled at calendar times; past the end of the deflator
/// the last value is held (the process is stopped there).
pub fn deflated_values_at(
    strategy: &StrategyPath,
    deflator: &DeflatorPath,
    path: &SamplePath,
    costs: &CostSpec,
    times: &[f64],
) -> Result<Vec<f64>> {
    let adm = check_admissible(strategy, path, costs)?;
    if let Some(index) = adm.first_violation {
        return Err(Error::Inadmissible {
            index,
            value: adm.min_liquidation_value,
        });
    }
    let v = deflated_values(strategy, deflator)?;
    let last = v.len() - 1;
    Ok(times.iter().map(|&t| v[path.index_at(t).min(last)]).collect())
}

/// Test of `E[V_{t_{j+1}} - V_{t_j}] <= 0` on paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub from: f64,
    pub to: f64,
    pub mean_diff: f64,
    pub std_err: f64,
    pub z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub increments: Vec<IncrementRow>,
    pub threshold: f64,
    pub passed: bool,
}

/// Monotone-mean check from a matrix with one row per path and one column
/// per time: successive means must not increase beyond `threshold` SE of
/// the paired difference.
pub fn monotone_mean_report(times: &[f64], values: &[Vec<f64>], threshold: f64) -> Result<SupermartingaleReport> {
    if values.len() < 2 {
        return Err(Error::DegenerateVariance(format!("{} paths", values.len())));
    }
    if values.iter().any(|r| r.len() != times.len()) {
        return Err(Error::GridMismatch("every path needs one value per time".into()));
    }
    let column = |j: usize| values.iter().map(|r| r[j]).collect::<Vec<_>>();
    let (means, std_errs) = (0..times.len()).map(|j| mc::mean_se(&column(j))).unzip();
    let increments: Vec<IncrementRow> = (1..times.len())
        .map(|j| {
            let d: Vec<f64> = values.iter().map(|r| r[j] - r[j - 1]).collect();
            let (m, se) = mc::mean_se(&d);
            let z = z_score(m, se);
            IncrementRow {
                from: times[j - 1],
                to: times[j],
                mean_diff: m,
                std_err: se,
                z,
                passed: z < threshold,
            }
        })
        .collect();
    let passed = increments.iter().all(|r| r.passed);
    Ok(SupermartingaleReport {
        times: times.to_vec(),
        means,
        std_errs,
        increments,
        threshold,
        passed,
    })
}

/// Samples `n` (strategy, deflator, path) triples from `sample`, evaluates
/// the deflated value at `times` and runs [`monotone_mean_report`].
pub fn deflated_value_supermartingale_check<F>(
    times: &[f64],
    costs: &CostSpec,
    n: usize,
    seed: u64,
    threshold: f64,
    sample: F,
) -> Result<SupermartingaleReport>
where
    F: Fn(&mut McRng) -> Result<(StrategyPath, DeflatorPath, SamplePath)> + Sync,
{
    let values = mc::collect(n, seed, |rng: &mut McRng| {
        let (strategy, deflator, path) = sample(rng)?;
        deflated_values_at(&strategy, &deflator, &path, costs, times)
    })?;
    monotone_mean_report(times, &values, threshold)
}

/// Closed-form dual value of the Poisson market,
/// `v(y) = -ln y + ln(αλ) + (1-αλ)/(αλ) - 1`.
pub fn poisson_dual_value(alpha: f64, costs: &CostSpec, y: f64) -> Result<f64> {
    check_poisson_costs(alpha, costs)?;
    if !(y > 0.0) {
        return Err(invalid(format!("dual scale must be positive, got {y}")));
    }
    let al = alpha * costs.lambda();
    Ok(-y.ln() + al.ln() + (1.0 - al) / al - 1.0)
}

/// Closed-form expected log-utility of constant leverage `ell` in the
/// Poisson market: `ln x + ln(1 - ℓλ) + g(ℓ)/α`.
pub fn poisson_primal_value(alpha: f64, costs: &CostSpec, x: f64, ell: f64) -> f64 {
    let g = crate::strategies::constant_leverage_growth(ell, costs);
    x.ln() + (1.0 - ell * costs.lambda()).ln() + g / alpha
}

/// Primal and dual values of the Poisson market and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub alpha: f64,
    pub lambda: f64,
    pub x: f64,
    pub ell_hat: f64,
    /// Monte-Carlo `E[ln V^liq_tau]` of the constant-`ℓ̂` strategy.
    pub u_value: f64,
    pub u_se: f64,
    pub u_closed: f64,
    /// Closed-form dual value at `y`.
    pub v_value: f64,
    /// Monte-Carlo `E[-ln(y Ẑ⁰_tau) - 1]` on the same draws as `u_value`.
    pub v_mc: f64,
    pub v_mc_se: f64,
    pub y: f64,
    /// `u_value - (v_value + x y)`.
    pub gap: f64,
    pub se: f64,
    pub gap_z: f64,
    /// Largest `|1/V^liq_tau - y Ẑ⁰_tau| / (y Ẑ⁰_tau)` over the sampled paths.
    pub foc_max_rel_err: f64,
    pub foc_paths: usize,
    /// `E[ĝ ĥ]`, which should equal `x y`.
    pub product_mean: f64,
    pub product_se: f64,
    pub n: usize,
    pub seed: u64,
}

/// Paths on which the first-order condition is checked through the full
/// path machinery.
pub const FOC_PATHS: usize = 1000;

/// Duality report at `y = 1/x`. The first-order condition is evaluated on
/// `min(n, FOC_PATHS)` full grid paths: the liquidation value of the
/// constant-`ℓ̂` strategy at the stopping index against `Ẑ⁰` there.
pub fn poisson_duality_report(
    spec: &PoissonMarketSpec,
    costs: &CostSpec,
    x: f64,
    n: usize,
    seed: u64,
) -> Result<DualityReport> {
    spec.validate()?;
    let alpha = spec.alpha;
    check_poisson_costs(alpha, costs)?;
    if !(x > 0.0) {
        return Err(invalid(format!("endowment must be positive, got {x}")));
    }
    let lambda = costs.lambda();
    let ell = poisson_optimal_leverage(alpha, costs)?;
    let y = 1.0 / x;
    let v_value = poisson_dual_value(alpha, costs, y)?;

    let draws = mc::collect(n, seed, |rng: &mut McRng| {
        let tau = sample_tau_poisson(alpha, rng);
        let v = terminal_liquidation(x, ell, tau, costs);
        let z0 = poisson_dual_pair(alpha, lambda, tau, 1.0).0;
        Ok((v.ln(), -(y * z0).ln() - 1.0, v * y * z0))
    })?;
    let (u, rest): (Vec<f64>, Vec<(f64, f64)>) = draws.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
    let (vm, prod): (Vec<f64>, Vec<f64>) = rest.into_iter().unzip();
    let (u_value, u_se) = mc::mean_se(&u);
    let (v_mc, v_mc_se) = mc::mean_se(&vm);
    let (product_mean, product_se) = mc::mean_se(&prod);
    let gap = u_value - (v_value + x * y);

    let foc_paths = n.min(FOC_PATHS);
    let errs = mc::collect(foc_paths, seed ^ 0x5f0c, |rng: &mut McRng| {
        let path = sample_poisson_market(spec, rng)?;
        let strat = constant_leverage_strategy(x, ell, &path, costs)?;
        let defl = poisson_dual_cps(alpha, costs, &path)?;
        let k = path.stop_index();
        let v = liquidation_value(strat.phi0()[k], strat.phi1()[k], path.price()[k], costs)?;
        let h = y * defl.y0()[k];
        Ok((1.0 / v - h).abs() / h)
    })?;
    let foc_max_rel_err = errs.into_iter().fold(0.0, f64::max);

    Ok(DualityReport {
        alpha,
        lambda,
        x,
        ell_hat: ell,
        u_value,
        u_se,
        u_closed: poisson_primal_value(alpha, costs, x, ell),
        v_value,
        v_mc,
        v_mc_se,
        y,
        gap,
        se: u_se,
        gap_z: z_score(gap, u_se),
        foc_max_rel_err,
        foc_paths,
        product_mean,
        product_se,
        n,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitRow {
    pub c: f64,
    pub mean: f64,
    pub std_err: f64,
    /// Paired difference to the previous row, on common draws.
    pub diff_from_prev: Option<f64>,
    pub diff_se: Option<f64>,
    /// Whether buying `c` shares at `t = 0` is admissible under costs.
    pub admissible_under_costs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitTable {
    pub x: f64,
    pub distance: f64,
    pub rows: Vec<ProfitRow>,
    /// Paths with a negative frictionless gain (should be zero).
    pub negative_gains: usize,
    pub n: usize,
    pub seed: u64,
}

/// Frictionless buy-and-hold of `C` shares on `(0, σ]` priced at the shadow
/// candidate `S`, where `σ` is the time for the driver to fall by `distance`
/// (inverse Gaussian with mean `distance` and shape `distance²`). Reports
/// `E[ln(x + C(e^σ - 1))]` for each `C` on common draws.
pub fn unbounded_profit_demo(
    distance: f64,
    c_list: &[f64],
    x: f64,
    costs: &CostSpec,
    n: usize,
    seed: u64,
) -> Result<ProfitTable> {
    if !(distance > 0.0) {
        return Err(invalid(format!(
            "distance to the threshold must be positive, got {distance}"
        )));
    }
    if !(x > 0.0) {
        return Err(invalid(format!("endowment must be positive, got {x}")));
    }
    if c_list.iter().any(|&c| !(c >= 0.0)) || c_list.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(invalid("share counts must be non-negative and increasing"));
    }
    let gains = mc::collect(n, seed, |rng: &mut McRng| {
        Ok(sample_inverse_gaussian(distance, distance * distance, rng).exp_m1())
    })?;
    let negative_gains = gains.iter().filter(|&&g| g < 0.0).count();
    let logs: Vec<Vec<f64>> = c_list
        .iter()
        .map(|&c| gains.iter().map(|&g| (x + c * g).ln()).collect())
        .collect();
    let mut rows = Vec::with_capacity(c_list.len());
    for (i, &c) in c_list.iter().enumerate() {
        let (mean, std_err) = mc::mean_se(&logs[i]);
        let (diff_from_prev, diff_se) = if i > 0 {
            let d: Vec<f64> = logs[i].iter().zip(&logs[i - 1]).map(|(a, b)| a - b).collect();
            let (m, se) = mc::mean_se(&d);
            (Some(m), Some(se))
        } else {
            (None, None)
        };
        let liq = liquidation_value(x - c, c, 1.0, costs)?;
        rows.push(ProfitRow {
            c,
            mean,
            std_err,
            diff_from_prev,
            diff_se,
            admissible_under_costs: liq >= 0.0,
        });
    }
    Ok(ProfitTable {
        x,
        distance,
        rows,
        negative_gains,
        n,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub h: f64,
    pub mean: f64,
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub q99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
    pub n: usize,
    pub seed: u64,
}

/// Lower nearest-rank quantile of a sorted slice; exact under positive scaling.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * p).floor() as usize]
}

/// Frictionless buy-and-hold gains `H (S_tau - 1)` on common draws of `tau`.
pub fn nupbr_violation_demo(model: &MarketModel, h_list: &[f64], n: usize, seed: u64) -> Result<GainTable> {
    model.validate()?;
    if h_list.iter().any(|&h| !(h >= 0.0)) {
        return Err(invalid("position sizes must be non-negative"));
    }
    let mut base = mc::collect(n, seed, |rng: &mut McRng| Ok(model.sample_tau(rng).exp_m1()))?;
    base.sort_by(f64::total_cmp);
    let rows = h_list
        .iter()
        .map(|&h| {
            let g: Vec<f64> = base.iter().map(|&b| h * b).collect();
            GainRow {
                h,
                mean: g.iter().sum::<f64>() / n as f64,
                min: g[0],
                q05: quantile(&g, 0.05),
                median: quantile(&g, 0.5),
                q95: quantile(&g, 0.95),
                q99: quantile(&g, 0.99),
            }
        })
        .collect();
    Ok(GainTable { rows, n, seed })
}

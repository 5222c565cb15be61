//! Exact samplers for the two exponential-until-stopped markets.
//!
//! Both markets have price `S_t = exp(t ∧ tau)`. In the Brownian market `tau`
//! is the first passage of `W_t = w + B_t - t` to zero (inverse Gaussian with
//! mean `w`, shape `w²`, hence variance `w`); in the Poisson market `tau` is
//! the first jump time of a rate-`alpha` Poisson process.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::mc::{self, McEstimate, McRng};
use crate::trading::{DriverKind, SamplePath};

/// Default safety horizon of a Brownian path as a multiple of `w`.
pub const T_CAP_FACTOR: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianMarketSpec {
    /// Initial driver level `W_0`.
    pub w: f64,
    pub dt: f64,
    /// Simulation stops (censored) once the grid reaches this time.
    pub t_cap: f64,
    /// Brownian-bridge test for barrier crossings between grid points.
    #[serde(default)]
    pub bridge_correction: bool,
}

impl BrownianMarketSpec {
    pub fn new(w: f64, dt: f64) -> Result<Self> {
        let spec = Self {
            w,
            dt,
            t_cap: T_CAP_FACTOR * w,
            bridge_correction: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_t_cap(mut self, t_cap: f64) -> Result<Self> {
        self.t_cap = t_cap;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bridge_correction(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(invalid(format!(
                "Brownian start level must be positive, got {}",
                self.w
            )));
        }
        if !(self.dt > 0.0) {
            return Err(invalid(format!("grid step must be positive, got {}", self.dt)));
        }
        if !(self.t_cap > 0.0) {
            return Err(invalid(format!("t_cap must be positive, got {}", self.t_cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonMarketSpec {
    pub alpha: f64,
    /// Grid step used when a full path is materialized.
    #[serde(default = "default_poisson_dt")]
    pub dt: f64,
    /// Grid continues (frozen) past `tau` up to this time.
    #[serde(default)]
    pub horizon: f64,
}

fn default_poisson_dt() -> f64 {
    0.01
}

impl PoissonMarketSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            dt: default_poisson_dt(),
            horizon: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_grid(mut self, dt: f64, horizon: f64) -> Result<Self> {
        self.dt = dt;
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(invalid(format!(
                "Poisson intensity must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.dt > 0.0) {
            return Err(invalid(format!("grid step must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) {
            return Err(invalid("horizon must be non-negative"));
        }
        Ok(())
    }
}

/// Either market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarketModel {
    Brownian(BrownianMarketSpec),
    Poisson(PoissonMarketSpec),
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarketModel::Brownian(s) => s.validate(),
            MarketModel::Poisson(s) => s.validate(),
        }
    }

    /// Exact draw of the stopping time.
    pub fn sample_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarketModel::Brownian(s) => sample_tau_brownian(s.w, rng),
            MarketModel::Poisson(s) => sample_tau_poisson(s.alpha, rng),
        }
    }

    pub fn mean_tau(&self) -> f64 {
        match self {
            MarketModel::Brownian(s) => s.w,
            MarketModel::Poisson(s) => 1.0 / s.alpha,
        }
    }
}

/// Inverse Gaussian draw by the transformation-with-rejection method:
/// a root of the chi-square transform, accepted against a uniform.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    debug_assert!(mean > 0.0 && shape > 0.0);
    let z: f64 = rng.sample(StandardNormal);
    let a = mean * z * z / (2.0 * shape);
    // mean * (1 + a - sqrt(a² + 2a)), rationalized to avoid cancellation.
    let x = mean / (1.0 + a + (a * (a + 2.0)).sqrt());
    let u: f64 = rng.random();
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// First passage time of `w + B_t - t` to zero: inverse Gaussian with mean
/// `w` and shape `w²`. Returns 0 for `w <= 0`.
pub fn sample_tau_brownian<R: Rng + ?Sized>(w: f64, rng: &mut R) -> f64 {
    if !(w > 0.0) {
        return 0.0;
    }
    sample_inverse_gaussian(w, w * w, rng)
}

/// First jump time of a rate-`alpha` Poisson process.
pub fn sample_tau_poisson<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / alpha
}

/// `P[tau <= x]` for an inverse Gaussian law.
pub fn inverse_gaussian_cdf(x: f64, mean: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let r = (shape / x).sqrt();
    let first = normal_cdf(r * (x / mean - 1.0));
    let tail = normal_cdf(-r * (x / mean + 1.0));
    let second = if tail > 0.0 {
        (2.0 * shape / mean + tail.ln()).exp()
    } else {
        0.0
    };
    (first + second).min(1.0)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// State of one step of [`BrownianWalk`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkStatus {
    Alive,
    Absorbed,
    Censored,
}

/// Grid simulation of `W_t = w + B_t - t` with exact Gaussian increments,
/// absorbed at the first grid point with `W <= 0` (or, with the bridge
/// correction, at the first step whose bridge crosses zero).
#[derive(Debug, Clone)]
pub struct BrownianWalk {
    dt: f64,
    sqrt_dt: f64,
    t_cap: f64,
    bridge: bool,
    k: usize,
    t: f64,
    w: f64,
    status: WalkStatus,
}

impl BrownianWalk {
    pub fn new(spec: &BrownianMarketSpec) -> Self {
        Self::from_level(spec.w, spec)
    }

    /// Walk started at an arbitrary level with the grid settings of `spec`.
    pub fn from_level(w: f64, spec: &BrownianMarketSpec) -> Self {
        Self {
            dt: spec.dt,
            sqrt_dt: spec.dt.sqrt(),
            t_cap: spec.t_cap,
            bridge: spec.bridge_correction,
            k: 0,
            t: 0.0,
            w,
            status: if w > 0.0 {
                WalkStatus::Alive
            } else {
                WalkStatus::Absorbed
            },
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }
    pub fn level(&self) -> f64 {
        self.w
    }
    pub fn index(&self) -> usize {
        self.k
    }
    pub fn status(&self) -> WalkStatus {
        self.status
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one grid step. Has no effect once absorbed or censored.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> WalkStatus {
        if self.status != WalkStatus::Alive {
            return self.status;
        }
        let z: f64 = rng.sample(StandardNormal);
        let prev = self.w;
        self.w = prev - self.dt + self.sqrt_dt * z;
        self.k += 1;
        self.t = self.k as f64 * self.dt;
        if self.w <= 0.0 {
            self.status = WalkStatus::Absorbed;
        } else if self.bridge {
            let p = (-2.0 * prev * self.w / self.dt).exp();
            let u: f64 = rng.random();
            if u < p {
                self.w = 0.0;
                self.status = WalkStatus::Absorbed;
            }
        }
        if self.status == WalkStatus::Alive && self.t >= self.t_cap {
            self.status = WalkStatus::Censored;
        }
        self.status
    }

    /// Steps until absorption or censoring, returning the final status.
    pub fn run_to_end<R: Rng + ?Sized>(&mut self, rng: &mut R) -> WalkStatus {
        while self.step(rng) == WalkStatus::Alive {}
        self.status
    }
}

/// Full grid path of the Brownian market; the driver column stores `W`.
/// A path that reaches `t_cap` alive is returned with `censored = true`.
pub fn sample_brownian_market<R: Rng + ?Sized>(spec: &BrownianMarketSpec, rng: &mut R) -> Result<SamplePath> {
    spec.validate()?;
    let mut walk = BrownianWalk::new(spec);
    let mut times = vec![0.0];
    let mut driver = vec![spec.w];
    let mut price = vec![1.0];
    loop {
        let status = walk.step(rng);
        times.push(walk.time());
        driver.push(walk.level());
        price.push(walk.time().exp());
        if status != WalkStatus::Alive {
            break;
        }
    }
    let stop = times.len() - 1;
    let censored = walk.status() == WalkStatus::Censored;
    SamplePath::new(DriverKind::Brownian, times, driver, price, stop, None, censored)
}

/// Poisson market path with `tau` drawn exactly and inserted into the grid.
/// The driver column stores `N_{t ∧ tau}`.
pub fn sample_poisson_market<R: Rng + ?Sized>(spec: &PoissonMarketSpec, rng: &mut R) -> Result<SamplePath> {
    spec.validate()?;
    let tau = sample_tau_poisson(spec.alpha, rng);
    poisson_path_with_tau(spec, tau)
}

/// Poisson market path for a given jump time.
pub fn poisson_path_with_tau(spec: &PoissonMarketSpec, tau: f64) -> Result<SamplePath> {
    if !(tau > 0.0) {
        return Err(invalid(format!("jump time must be positive, got {tau}")));
    }
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * spec.dt;
        if t >= tau {
            break;
        }
        times.push(t);
        k += 1;
    }
    let stop = times.len();
    times.push(tau);
    loop {
        let t = k as f64 * spec.dt;
        if t > spec.horizon {
            break;
        }
        if t > tau {
            times.push(t);
        }
        k += 1;
    }
    let driver = (0..times.len()).map(|i| if i >= stop { 1.0 } else { 0.0 }).collect();
    let frozen = tau.exp();
    let price = times
        .iter()
        .enumerate()
        .map(|(i, t)| if i >= stop { frozen } else { t.exp() })
        .collect();
    SamplePath::new(DriverKind::Poisson, times, driver, price, stop, None, false)
}

/// Estimates `P[S_t ∈ [S_s/(1+ε), (1+ε) S_s] for all t >= s | tau > s]`.
///
/// Prices only rise, so the event is `{tau - s <= ln(1+ε)}`. For the Poisson
/// market the residual time is exponential again; for the Brownian market the
/// driver is simulated on the grid up to `s` and the residual passage time is
/// drawn exactly from the inverse Gaussian law at the level `W_s`.
/// The returned `n` counts the surviving paths.
pub fn stickiness_probability(model: &MarketModel, epsilon: f64, s: f64, n: usize, seed: u64) -> Result<McEstimate> {
    model.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid(format!("corridor width must be positive, got {epsilon}")));
    }
    if !(s >= 0.0) {
        return Err(invalid(format!("conditioning time must be non-negative, got {s}")));
    }
    let window = epsilon.ln_1p();
    let draws: Vec<Option<bool>> = mc::collect(n, seed, |rng: &mut McRng| {
        Ok(match model {
            MarketModel::Poisson(p) => {
                let tau = sample_tau_poisson(p.alpha, rng);
                (tau > s).then_some(tau - s <= window)
            }
            MarketModel::Brownian(b) => {
                let mut walk = BrownianWalk::new(b);
                let mut alive = true;
                while walk.time() + 0.5 * walk.dt() < s {
                    match walk.step(rng) {
                        WalkStatus::Alive => {}
                        WalkStatus::Absorbed => {
                            alive = false;
                            break;
                        }
                        WalkStatus::Censored => return Err(Error::Censored { t_cap: b.t_cap }),
                    }
                }
                alive.then(|| sample_tau_brownian(walk.level(), rng) <= window)
            }
        })
    })?;
    let alive = draws.iter().flatten().count();
    if alive == 0 {
        return Err(Error::NoSurvivors);
    }
    let hits = draws.iter().flatten().filter(|&&b| b).count();
    let p = hits as f64 / alive as f64;
    Ok(McEstimate {
        mean: p,
        std_err: (p * (1.0 - p) / alive as f64).sqrt(),
        n: alive,
        seed,
        non_finite: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;

    #[test]
    fn brownian_paths_are_non_decreasing_and_frozen() {
        let spec = BrownianMarketSpec::new(1.0, 1e-3).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..20 {
            let p = sample_brownian_market(&spec, &mut rng).unwrap();
            assert!(!p.censored());
            assert_eq!(p.price()[0], 1.0);
            assert!(p.price().windows(2).all(|w| w[1] >= w[0]));
            let k = p.stop_index();
            assert_eq!(p.price()[k], p.times()[k].exp());
            assert!(p.driver()[k] <= 0.0);
            assert!(p.driver()[..k].iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn censoring_is_flagged() {
        let spec = BrownianMarketSpec::new(5.0, 1e-2).unwrap().with_t_cap(0.5).unwrap();
        let mut rng = stream_rng(3, 0);
        let p = sample_brownian_market(&spec, &mut rng).unwrap();
        assert!(p.censored());
    }

    #[test]
    fn poisson_path_layout() {
        let spec = PoissonMarketSpec::new(1.0).unwrap().with_grid(0.1, 3.0).unwrap();
        let p = poisson_path_with_tau(&spec, 1.234).unwrap();
        let k = p.stop_index();
        assert_eq!(p.times()[k], 1.234);
        for (i, (&t, &n)) in p.times().iter().zip(p.driver()).enumerate() {
            if t < 1.234 {
                assert_eq!(n, 0.0);
                assert!((p.price()[i] - t.exp()).abs() < 1e-15);
            } else {
                assert_eq!(n, 1.0);
                assert_eq!(p.price()[i], 1.234f64.exp());
            }
        }
        assert!(*p.times().last().unwrap() <= 3.0 + 1e-12);
    }

    #[test]
    fn identical_seeds_reproduce_paths() {
        let spec = BrownianMarketSpec::new(2.0, 1e-2).unwrap();
        let a = sample_brownian_market(&spec, &mut stream_rng(99, 4)).unwrap();
        let b = sample_brownian_market(&spec, &mut stream_rng(99, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tau_at_the_barrier_is_zero() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(sample_tau_brownian(0.0, &mut rng), 0.0);
        // From level a the passage time is roughly a²/Z², with median about 2.2 a².
        let mut small: Vec<f64> = (0..1001).map(|_| sample_tau_brownian(1e-4, &mut rng)).collect();
        small.sort_by(f64::total_cmp);
        assert!(small[500] < 1e-7, "median {}", small[500]);
    }

    #[test]
    fn ig_cdf_limits() {
        assert_eq!(inverse_gaussian_cdf(0.0, 1.0, 1.0), 0.0);
        assert_eq!(inverse_gaussian_cdf(f64::INFINITY, 1.0, 1.0), 1.0);
        assert!(inverse_gaussian_cdf(100.0, 3.0, 9.0) > 0.999_999);
    }

    #[test]
    fn stickiness_rejects_bad_input() {
        let m = MarketModel::Poisson(PoissonMarketSpec::new(1.0).unwrap());
        assert!(stickiness_probability(&m, 0.0, 0.0, 10, 1).is_err());
        let huge = stickiness_probability(&m, f64::INFINITY, 0.0, 1000, 1).unwrap();
        assert_eq!(huge.mean, 1.0);
    }

    #[test]
    fn stickiness_without_survivors_is_an_error() {
        let m = MarketModel::Poisson(PoissonMarketSpec::new(50.0).unwrap());
        assert!(matches!(
            stickiness_probability(&m, 0.1, 10.0, 100, 1),
            Err(Error::NoSurvivors)
        ));
    }
}

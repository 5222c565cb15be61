use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclab_core::duality::*;
use tclab_core::markets::*;
use tclab_core::mc::{self, McRng};
use tclab_core::strategies::*;
use tclab_core::trading::{check_self_financing, CostSpec};

#[test]
fn inverse_gaussian_sampler_matches_its_cdf() {
    let (mean, shape) = (2.0, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let mut xs: Vec<f64> = (0..n).map(|_| sample_inverse_gaussian(mean, shape, &mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = inverse_gaussian_cdf(x, mean, shape);
            (f - i as f64 / n as f64)
                .abs()
                .max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov statistic.
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
}

#[test]
fn bridge_correction_removes_grid_overshoot_of_tau() {
    let w = 1.0;
    let mean_tau = |bridge: bool| {
        let spec = BrownianMarketSpec::new(w, 0.01).unwrap().with_bridge_correction(bridge);
        mc::estimate(20_000, 4, |rng: &mut McRng| {
            Ok(sample_brownian_market(&spec, rng)?.stop_time().min(20.0))
        })
        .unwrap()
    };
    // E[min(tau, 20)] for the continuous first passage, from the IG law.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let exact: f64 = (0..200_000)
        .map(|_| sample_tau_brownian(w, &mut rng).min(20.0))
        .sum::<f64>()
        / 200_000.0;
    let (plain, bridged) = (mean_tau(false), mean_tau(true));
    assert!(plain.mean - exact > 3.0 * plain.std_err, "{plain:?} vs {exact}");
    assert!((bridged.mean - exact).abs() < (plain.mean - exact).abs());
}

#[test]
fn poisson_utility_of_optimal_leverage_matches_closed_form() {
    let costs = CostSpec::new(0.5).unwrap();
    let alpha = 0.5;
    let ell = poisson_optimal_leverage(alpha, &costs).unwrap();
    assert!((ell - 1.5).abs() < 1e-12);
    let model = MarketModel::Poisson(PoissonMarketSpec::new(alpha).unwrap());
    let est = expected_log_utility_mc(
        &StrategyFactory::ConstantLeverage { ell },
        &model,
        1.0,
        &costs,
        100_000,
        8,
    )
    .unwrap();
    let closed = poisson_primal_value(alpha, &costs, 1.0, ell);
    assert!((closed - (0.25f64.ln() + 3.0)).abs() < 1e-12);
    assert!(est.z_against(closed).abs() < 4.0, "{est:?} vs {closed}");
}

#[test]
fn poisson_dual_value_dominates_constant_leverage_utilities() {
    let costs = CostSpec::new(0.5).unwrap();
    let alpha = 1.0;
    for y in [0.5, 1.0, 2.0] {
        let bound = poisson_dual_value(alpha, &costs, y).unwrap() + y;
        for ell in [0.0, 0.5, 1.0, 1.5, 1.9] {
            assert!(
                poisson_primal_value(alpha, &costs, 1.0, ell) <= bound + 1e-12,
                "y {y} ell {ell}"
            );
        }
    }
    assert!(poisson_dual_value(2.0, &costs, 1.0).is_err());
}

#[test]
fn brownian_optimizer_deflates_to_initial_wealth() {
    let costs = CostSpec::new(0.25).unwrap();
    let spec = BrownianMarketSpec::new(2.0, 1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let path = sample_brownian_market(&spec, &mut rng).unwrap();
        let sigma = first_passage_index(&path, 1.0);
        let s = constant_leverage_strategy(1.0, costs.max_leverage(), &path, &costs).unwrap();
        let d = brownian_dual_deflator(&costs, &path, sigma).unwrap();
        let c = cps_corridor_check(&d, &path, &costs).unwrap();
        assert!(c.passed && c.strictly_positive);
        for v in deflated_values(&s, &d).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn poisson_deflator_means_stay_at_one() {
    let costs = CostSpec::new(0.5).unwrap();
    let times = [0.25, 1.0, 3.0];
    let z = poisson_z0_samples(1.0, &costs, &times, 50_000, 21).unwrap();
    let rep = martingale_mean_test(&times, &z, 1.0, Z_THRESHOLD).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn stickiness_is_positive_for_both_markets() {
    let brown = MarketModel::Brownian(BrownianMarketSpec::new(1.0, 1e-3).unwrap());
    let pois = MarketModel::Poisson(PoissonMarketSpec::new(1.0).unwrap());
    for m in [brown, pois] {
        let p = stickiness_probability(&m, 0.1, 1.0, 20_000, 2).unwrap();
        assert!(p.mean > 3.0 * p.std_err && p.mean < 1.0, "{m:?}: {p:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn poisson_cps_stays_in_the_corridor(
        lambda in 0.05f64..0.95,
        frac in 0.01f64..0.99,
        tau in 0.0f64..6.0,
    ) {
        let costs = CostSpec::new(lambda).unwrap();
        let alpha = frac / lambda;
        let spec = PoissonMarketSpec::new(alpha).unwrap().with_grid(0.05, 6.0).unwrap();
        let path = poisson_path_with_tau(&spec, tau).unwrap();
        let d = poisson_dual_cps(alpha, &costs, &path).unwrap();
        let rep = cps_corridor_check(&d, &path, &costs).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
        prop_assert!(rep.strictly_positive);
    }

    #[test]
    fn poisson_dual_pair_ratio_is_the_bid_or_ask(
        alpha in 0.1f64..1.5,
        lambda in 0.05f64..0.6,
        u in 0.0f64..5.0,
    ) {
        prop_assume!(alpha * lambda < 1.0);
        let (z0, z1) = poisson_dual_pair(alpha, lambda, u, 0.0);
        prop_assert!((z1 / z0 - u.exp()).abs() <= 1e-9 * u.exp());
        let (z0, z1) = poisson_dual_pair(alpha, lambda, u, 1.0);
        prop_assert!((z1 / z0 - (1.0 - lambda) * u.exp()).abs() <= 1e-9 * u.exp());
    }

    #[test]
    fn constant_leverage_is_self_financing_to_second_order(
        lambda in 0.1f64..0.9,
        frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let costs = CostSpec::new(lambda).unwrap();
        let ell = 1.0 + frac * (costs.max_leverage() - 1.0);
        let dt = 1e-3;
        let spec = BrownianMarketSpec::new(1.0, dt).unwrap();
        let path = sample_brownian_market(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = constant_leverage_strategy(1.0, ell, &path, &costs).unwrap();
        // Per-step buy slack relative to the book, from a second-order expansion.
        let leading = ell * (ell - 1.0) / (2.0 * (2.0 * ell - 1.0)) * dt * dt;
        let rep = check_self_financing(&s, &path, &costs, 1.1 * leading + 1e-12).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn terminal_liquidation_is_the_closed_form(
        lambda in 0.1f64..0.9,
        frac in 0.0f64..0.99,
        tau in 0.0f64..5.0,
    ) {
        let costs = CostSpec::new(lambda).unwrap();
        let ell = frac * costs.max_leverage();
        let g = constant_leverage_growth(ell, &costs);
        let v = terminal_liquidation(2.0, ell, tau, &costs);
        prop_assert!((v - 2.0 * (1.0 - ell * lambda) * (g * tau).exp()).abs() <= 1e-12 * v.max(1.0));
    }
}

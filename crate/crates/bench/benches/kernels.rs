use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tclab_bench::{brownian, half, rng, sweep_fixture};
use tclab_core::dp::SolverConfig;
use tclab_core::markets::{sample_brownian_market, sample_inverse_gaussian, sample_tau_poisson};
use tclab_core::strategies::expected_log_utility_mc;
use tclab_core::{MarketModel, PoissonMarketSpec, StrategyFactory};

fn dp_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("dp_sweep");
    g.sample_size(20);
    for (name, cfg) in [
        (
            "coarse",
            SolverConfig {
                dl: 0.02,
                dw: 0.1,
                dt: 0.01,
                w_max: 10.0,
                ..SolverConfig::default()
            },
        ),
        ("default", SolverConfig::default()),
    ] {
        let mut f = sweep_fixture(&cfg);
        g.bench_function(name, |b| {
            b.iter(|| black_box(f.op.apply_with_scratch(&f.v, &mut f.out, &mut f.held)));
        });
    }
    g.finish();
}

fn samplers(c: &mut Criterion) {
    let mut r = rng(1);
    c.bench_function("inverse_gaussian", |b| {
        b.iter(|| black_box(sample_inverse_gaussian(3.0, 9.0, &mut r)))
    });
    c.bench_function("poisson_tau", |b| b.iter(|| black_box(sample_tau_poisson(1.0, &mut r))));

    let spec = brownian(1.0, 1e-3);
    c.bench_function("brownian_path_w1_dt1e-3", |b| {
        b.iter_batched(
            || rng(7),
            |mut r| black_box(sample_brownian_market(&spec, &mut r)),
            BatchSize::SmallInput,
        )
    });
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(20);
    let model = MarketModel::Poisson(PoissonMarketSpec::new(1.0).expect("valid market"));
    let costs = half();
    g.bench_function("poisson_constant_leverage_1e4", |b| {
        b.iter(|| {
            black_box(expected_log_utility_mc(
                &StrategyFactory::ConstantLeverage { ell: 1.0 },
                &model,
                1.0,
                &costs,
                10_000,
                3,
            ))
        })
    });
    g.finish();
}

criterion_group!(benches, dp_sweep, samplers, monte_carlo);
criterion_main!(benches);

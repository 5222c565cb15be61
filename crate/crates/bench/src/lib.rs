//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclab_core::dp::{BellmanOperator, SolverConfig};
use tclab_core::{BrownianMarketSpec, CostSpec};

pub fn half() -> CostSpec {
    CostSpec::new(0.5).expect("valid cost")
}

/// Operator on the default grid with its initial guess and scratch buffers.
pub struct SweepFixture {
    pub op: BellmanOperator,
    pub v: Vec<f64>,
    pub out: Vec<f64>,
    pub held: Vec<f64>,
}

pub fn sweep_fixture(config: &SolverConfig) -> SweepFixture {
    let op = BellmanOperator::new(&half(), config).expect("valid solver config");
    let v = op.initial_guess();
    SweepFixture {
        out: vec![0.0; v.len()],
        held: vec![0.0; v.len()],
        op,
        v,
    }
}

pub fn brownian(w: f64, dt: f64) -> BrownianMarketSpec {
    BrownianMarketSpec::new(w, dt).expect("valid market")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

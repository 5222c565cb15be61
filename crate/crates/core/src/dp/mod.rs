//! Value iteration for `v(l, w)`, the optimal expected log-liquidation value
//! per unit of book value at leverage `l` and driver level `w`, together
//! with extraction of the free boundary `ℓ(w)` and Monte-Carlo checks.

mod policy;
mod solver;
mod validate;
mod verify;

pub use policy::{
    estimate_wbar, extract_policy, isotonic_fit, raw_boundary, ExtractConfig, ExtractedPolicy, WbarEstimate,
    DEFAULT_EPS_POL, DEFAULT_ETA,
};
pub use solver::{solve_value_function, BellmanOperator, SolveMeta, SolverConfig, ValueGrid, SENTINEL};
pub use validate::{
    dpp_residual, max_leverage_optimality_check, policy_value_mc, small_w_regime_check, DppResidual,
    MaxLeverageComparison, SmallWRow, StopRule,
};
pub use verify::{verify_value_properties, PropertyCheck, PropertyReport, VerifyConfig};

//! Log-utility maximization under proportional transaction costs in markets
//! where the risky asset grows deterministically until a random time.
//!
//! The modules build on each other: [`trading`] holds the bid-ask calculus
//! (self-financing, liquidation value, leverage, admissibility), [`markets`]
//! samples the two exactly solvable markets, [`strategies`] builds the
//! optimal and policy-driven strategies, [`duality`] checks the dual objects,
//! and [`dp`] solves for the value function of the Brownian market.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod duality;
pub mod error;
pub mod io;
pub mod markets;
pub mod mc;
pub mod strategies;
pub mod trading;

pub use dp::{SolverConfig, ValueGrid};
pub use duality::{DeflatorPath, DualityReport};
pub use error::{Error, Result};
pub use markets::{BrownianMarketSpec, MarketModel, PoissonMarketSpec};
pub use mc::McEstimate;
pub use strategies::{LeveragePolicy, PolicyInterp, StrategyFactory};
pub use trading::{CostSpec, DriverKind, SamplePath, StrategyPath};

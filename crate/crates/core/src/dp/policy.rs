use serde::{Deserialize, Serialize};

use super::solver::ValueGrid;
use crate::error::{Error, Result};
use crate::strategies::LeveragePolicy;
use crate::trading::CostSpec;

/// Relative tolerance for "equal to the `l = 0` value" in boundary extraction.
pub const DEFAULT_EPS_POL: f64 = 1e-6;

/// Saturation counts as reached within this distance of `1/λ`.
pub const DEFAULT_ETA: f64 = 1e-9;

/// Per row, the largest `l` node with `v(l, w) >= v(0, w) - eps (1 + |v(0, w)|)`.
pub fn raw_boundary(grid: &ValueGrid, eps_pol: f64) -> Vec<f64> {
    (0..grid.n_w())
        .map(|r| {
            let row = grid.row(r);
            let floor = row[0] - eps_pol * (1.0 + row[0].abs());
            let i = row.iter().rposition(|&v| v >= floor).unwrap_or(0);
            grid.l_grid[i]
        })
        .collect()
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(y: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count), merged while their means decrease.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

/// Policy extraction tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub eps_pol: f64,
    /// Largest accepted sup-distance between the raw and monotone boundary,
    /// in units of `dl`.
    pub max_discrepancy_cells: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            eps_pol: DEFAULT_EPS_POL,
            max_discrepancy_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPolicy {
    pub policy: LeveragePolicy,
    pub raw: Vec<f64>,
    /// `max |raw - monotone|`.
    pub discrepancy: f64,
}

/// Free boundary `ℓ(w)` read off the grid, made non-decreasing.
pub fn extract_policy(grid: &ValueGrid, costs: &CostSpec, config: &ExtractConfig) -> Result<ExtractedPolicy> {
    let raw = raw_boundary(grid, config.eps_pol);
    let cap = costs.max_leverage();
    let iso: Vec<f64> = isotonic_fit(&raw).into_iter().map(|l| l.clamp(0.0, cap)).collect();
    let discrepancy = raw.iter().zip(&iso).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bound = config.max_discrepancy_cells * grid.dl();
    if discrepancy > bound {
        return Err(Error::UnderResolved { discrepancy, bound });
    }
    let policy = LeveragePolicy::new(grid.w_grid.clone(), iso, costs)?;
    Ok(ExtractedPolicy {
        policy,
        raw,
        discrepancy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbarEstimate {
    pub wbar: f64,
    pub index: usize,
    /// Saturation first happens in the top tenth of the `w` range.
    pub unreliable: bool,
}

/// Smallest policy node with `ℓ(w) >= 1/λ - eta`.
pub fn estimate_wbar(policy: &LeveragePolicy, costs: &CostSpec, eta: f64) -> Result<WbarEstimate> {
    let cap = costs.max_leverage();
    let w = policy.w_nodes();
    let index = policy
        .ell_nodes()
        .iter()
        .position(|&l| l >= cap - eta)
        .ok_or(Error::NoSaturation)?;
    let (lo, hi) = (w[0], w[w.len() - 1]);
    Ok(WbarEstimate {
        wbar: w[index],
        index,
        unreliable: w.len() > 1 && w[index] > lo + 0.9 * (hi - lo),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pava_examples() {
        assert_eq!(isotonic_fit(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(isotonic_fit(&[3.0, 1.0]), vec![2.0, 2.0]);
        assert_eq!(isotonic_fit(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert!(isotonic_fit(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn pava_is_monotone_and_mean_preserving(y in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            let f = isotonic_fit(&y);
            prop_assert_eq!(f.len(), y.len());
            prop_assert!(f.windows(2).all(|p| p[0] <= p[1] + 1e-12));
            let (a, b): (f64, f64) = (y.iter().sum(), f.iter().sum());
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn pava_fixes_monotone_input(mut y in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            y.sort_by(f64::total_cmp);
            let f = isotonic_fit(&y);
            for (a, b) in f.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wbar_of_saturated_policy_is_zero() {
        let c = CostSpec::new(0.5).unwrap();
        let p = LeveragePolicy::new(vec![0.0, 1.0, 2.0], vec![2.0; 3], &c).unwrap();
        let e = estimate_wbar(&p, &c, DEFAULT_ETA).unwrap();
        assert_eq!(e.wbar, 0.0);
        assert!(!e.unreliable);
    }

    #[test]
    fn wbar_flags_and_errors() {
        let c = CostSpec::new(0.5).unwrap();
        let w: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let mut ell = vec![0.0; 11];
        ell[10] = 2.0;
        let p = LeveragePolicy::new(w.clone(), ell, &c).unwrap();
        assert!(estimate_wbar(&p, &c, DEFAULT_ETA).unwrap().unreliable);
        let p = LeveragePolicy::new(w, vec![1.0; 11], &c).unwrap();
        assert!(matches!(estimate_wbar(&p, &c, DEFAULT_ETA), Err(Error::NoSaturation)));
    }
}

use serde::{Deserialize, Serialize};

use super::solver::{ValueGrid, SENTINEL};

/// Tolerances of [`verify_value_properties`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Allowed positive second difference in `l`.
    pub concavity_tol: f64,
    /// Allowed violation of monotonicity in either direction.
    pub monotone_tol: f64,
    /// Allowed spread of a row on `[0, ℓ(w)]`.
    pub flat_tol: f64,
    pub bound_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            concavity_tol: 1e-6,
            monotone_tol: 1e-9,
            flat_tol: 1e-5,
            bound_tol: 1e-9,
        }
    }
}

/// One property: whether it holds and the worst offending node `(i, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub passed: bool,
    pub worst: f64,
    pub at: Option<(usize, usize)>,
}

impl PropertyCheck {
    fn new() -> Self {
        Self {
            passed: true,
            worst: 0.0,
            at: None,
        }
    }

    /// Records an excess over tolerance (positive means violated).
    fn record(&mut self, excess: f64, tol: f64, at: (usize, usize)) {
        if excess > self.worst {
            self.worst = excess;
            self.at = Some(at);
        }
        if excess > tol {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub boundary_exact: PropertyCheck,
    pub concave_in_l: PropertyCheck,
    pub non_increasing_in_l: PropertyCheck,
    pub non_decreasing_in_w: PropertyCheck,
    pub flat_below_boundary: PropertyCheck,
    pub strictly_decreasing_above: PropertyCheck,
    pub boundary_monotone: PropertyCheck,
    pub upper_bound: PropertyCheck,
    pub passed: bool,
}

/// Checks the shape properties of a solved grid against `grid.ell_boundary`.
pub fn verify_value_properties(grid: &ValueGrid, config: &VerifyConfig) -> PropertyReport {
    let nl = grid.n_l();
    let nw = grid.n_w();
    let lambda = grid.lambda();
    let dl = grid.dl();
    let singular = |i: usize, r: usize| r == 0 && i == nl - 1;

    let mut boundary_exact = PropertyCheck::new();
    for i in 0..nl {
        let want = if i == nl - 1 {
            SENTINEL
        } else {
            (1.0 - lambda * grid.l_grid[i]).ln()
        };
        let got = grid.at(i, 0);
        boundary_exact.record(
            if got == want {
                0.0
            } else {
                (got - want).abs().max(f64::MIN_POSITIVE)
            },
            0.0,
            (i, 0),
        );
    }

    let mut concave = PropertyCheck::new();
    let mut dec_l = PropertyCheck::new();
    let mut flat = PropertyCheck::new();
    let mut strict = PropertyCheck::new();
    for r in 0..nw {
        let row = grid.row(r);
        for i in 1..nl - 1 {
            if singular(i + 1, r) {
                continue;
            }
            concave.record(row[i + 1] - 2.0 * row[i] + row[i - 1], config.concavity_tol, (i, r));
        }
        for i in 0..nl - 1 {
            if singular(i + 1, r) {
                continue;
            }
            dec_l.record(row[i + 1] - row[i], config.monotone_tol, (i, r));
        }
        let kb = ((grid.ell_boundary[r] / dl).round() as usize).min(nl - 1);
        let (lo, hi) = row[..=kb]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        flat.record(hi - lo, config.flat_tol, (kb, r));
        for i in kb + 1..nl - 1 {
            if singular(i + 1, r) {
                continue;
            }
            // Strict decrease: any non-negative step is a violation.
            let step = row[i + 1] - row[i];
            strict.record(if step >= 0.0 { step.max(f64::MIN_POSITIVE) } else { 0.0 }, 0.0, (i, r));
        }
    }

    let mut inc_w = PropertyCheck::new();
    for r in 0..nw - 1 {
        for i in 0..nl {
            if singular(i, r) {
                continue;
            }
            inc_w.record(grid.at(i, r) - grid.at(i, r + 1), config.monotone_tol, (i, r));
        }
    }

    let mut mono_b = PropertyCheck::new();
    for r in 0..nw - 1 {
        mono_b.record(grid.ell_boundary[r] - grid.ell_boundary[r + 1], 0.0, (0, r));
    }

    let mut bound = PropertyCheck::new();
    for r in 0..nw {
        for i in 0..nl {
            bound.record(grid.at(i, r) - grid.w_grid[r] / lambda, config.bound_tol, (i, r));
        }
    }

    let passed = [
        &boundary_exact,
        &concave,
        &dec_l,
        &inc_w,
        &flat,
        &strict,
        &mono_b,
        &bound,
    ]
    .iter()
    .all(|c| c.passed);
    PropertyReport {
        boundary_exact,
        concave_in_l: concave,
        non_increasing_in_l: dec_l,
        non_decreasing_in_w: inc_w,
        flat_below_boundary: flat,
        strictly_decreasing_above: strict,
        boundary_monotone: mono_b,
        upper_bound: bound,
        passed,
    }
}

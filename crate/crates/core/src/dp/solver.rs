use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::strategies::{hold_leverage, log_book_growth};
use crate::trading::CostSpec;

/// Stored at the singular node `(1/λ, 0)` in place of `-inf`.
pub const SENTINEL: f64 = -1e30;

/// Discretization and stopping parameters of the value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dl: f64,
    pub dw: f64,
    pub dt: f64,
    pub w_max: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dl: 0.01,
            dw: 0.05,
            dt: 0.0025,
            w_max: 20.0,
            tol: 1e-8,
            max_iter: 200_000,
        }
    }
}

impl SolverConfig {
    /// All three steps divided by two.
    pub fn refined(&self) -> Self {
        Self {
            dl: self.dl / 2.0,
            dw: self.dw / 2.0,
            dt: self.dt / 2.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dl", self.dl),
            ("dw", self.dw),
            ("dt", self.dt),
            ("w_max", self.w_max),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if self.w_max < 2.0 * self.dw {
            return Err(invalid(format!("w_max = {} needs at least two w cells", self.w_max)));
        }
        // A two-point move shorter than a cell makes the interpolation
        // diffusion dominate the Brownian one.
        if self.dw > self.dt.sqrt() * (1.0 + 1e-12) {
            return Err(Error::Unstable(format!(
                "dw = {} exceeds sqrt(dt) = {}",
                self.dw,
                self.dt.sqrt()
            )));
        }
        if self.dt.sqrt() + self.dt >= self.w_max {
            return Err(Error::Unstable(format!(
                "a single move of size sqrt(dt) + dt spans w_max = {}",
                self.w_max
            )));
        }
        Ok(())
    }
}

/// Convergence record of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub lambda: f64,
    pub dl: f64,
    pub dw: f64,
    pub dt: f64,
    pub w_max: f64,
    pub tol: f64,
    pub iterations: usize,
    pub final_delta: f64,
    pub elapsed_secs: f64,
    /// Sup-norm change of every sweep.
    pub deltas: Vec<f64>,
}

/// Value function `v(l, w)` on a uniform `(l, w)` grid, stored row by row in `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub l_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    /// `v[r * l_grid.len() + i] = v(l_i, w_r)`.
    pub v: Vec<f64>,
    /// Largest `l` node where each row is within tolerance of its `l = 0` value.
    pub ell_boundary: Vec<f64>,
    pub meta: SolveMeta,
}

impl ValueGrid {
    pub fn n_l(&self) -> usize {
        self.l_grid.len()
    }
    pub fn n_w(&self) -> usize {
        self.w_grid.len()
    }
    pub fn lambda(&self) -> f64 {
        self.meta.lambda
    }
    pub fn dl(&self) -> f64 {
        self.meta.dl
    }
    pub fn dw(&self) -> f64 {
        self.meta.dw
    }

    #[inline]
    pub fn at(&self, i: usize, r: usize) -> f64 {
        self.v[r * self.l_grid.len() + i]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.l_grid.len();
        &self.v[r * n..(r + 1) * n]
    }

    /// Bilinear interpolation; the `w = 0` row is evaluated exactly and
    /// levels above `w_max` use the top row.
    pub fn value_at(&self, l: f64, w: f64) -> f64 {
        let lambda = self.lambda();
        let cap = 1.0 / lambda;
        let l = l.clamp(0.0, cap);
        if w <= 0.0 {
            return (1.0 - lambda * l).ln();
        }
        let nl = self.n_l() - 1;
        let nw = self.n_w() - 1;
        let x = (l / self.dl()).min(nl as f64);
        let i = (x.floor() as usize).min(nl - 1);
        let b = x - i as f64;
        let row_val = |r: usize| {
            if r == 0 {
                (1.0 - lambda * l).ln()
            } else {
                (1.0 - b) * self.at(i, r) + b * self.at(i + 1, r)
            }
        };
        let y = w / self.dw();
        if y >= nw as f64 {
            return row_val(nw);
        }
        let q = y.floor() as usize;
        let a = y - q as f64;
        if a == 0.0 {
            row_val(q)
        } else {
            (1.0 - a) * row_val(q) + a * row_val(q + 1)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Move {
    off: isize,
    frac: f64,
}

/// One step of the dynamic programme: free buys to any `l' >= l`, hold for
/// `dt` while the driver makes a two-point move `-dt ± sqrt(dt)`, and pay
/// `ln(1 - λ L)` on absorption at `w <= 0`.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    lambda: f64,
    dl: f64,
    dw: f64,
    dt: f64,
    nl: usize,
    nw: usize,
    growth: Vec<f64>,
    idx: Vec<usize>,
    wt: Vec<f64>,
    absorb: Vec<f64>,
    moves: [Move; 2],
}

impl BellmanOperator {
    pub fn new(costs: &CostSpec, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let lambda = costs.lambda();
        let cap = costs.max_leverage();
        let nl = (cap / config.dl - 1e-9).ceil() as usize;
        let nw = (config.w_max / config.dw - 1e-9).ceil() as usize;
        let dl = cap / nl as f64;
        let dw = config.w_max / nw as f64;
        if dw > config.dt.sqrt() * (1.0 + 1e-12) {
            return Err(Error::Unstable(format!(
                "effective dw = {dw} exceeds sqrt(dt) = {}",
                config.dt.sqrt()
            )));
        }
        let dt = config.dt;
        let mut growth = Vec::with_capacity(nl + 1);
        let mut idx = Vec::with_capacity(nl + 1);
        let mut wt = Vec::with_capacity(nl + 1);
        let mut absorb = Vec::with_capacity(nl + 1);
        for j in 0..=nl {
            let l = j as f64 * dl;
            let h = hold_leverage(l, dt);
            let x = (h / dl).min(nl as f64);
            let i = (x.floor() as usize).min(nl - 1);
            growth.push(log_book_growth(l, dt));
            idx.push(i);
            wt.push(x - i as f64);
            absorb.push((1.0 - lambda * h).ln());
        }
        let mk = |x: f64| {
            let f = x.floor();
            Move {
                off: f as isize,
                frac: x - f,
            }
        };
        let s = dt.sqrt();
        Ok(Self {
            lambda,
            dl,
            dw,
            dt,
            nl,
            nw,
            growth,
            idx,
            wt,
            absorb,
            moves: [mk((-dt + s) / dw), mk((-dt - s) / dw)],
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// Number of `l` intervals.
    pub fn nl(&self) -> usize {
        self.nl
    }
    /// Number of `w` intervals.
    pub fn nw(&self) -> usize {
        self.nw
    }
    pub fn dl(&self) -> f64 {
        self.dl
    }
    pub fn dw(&self) -> f64 {
        self.dw
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        (self.nl + 1) * (self.nw + 1)
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exact `w = 0` row, with the sentinel at `l = 1/λ`.
    pub fn boundary_row(&self) -> Vec<f64> {
        (0..=self.nl)
            .map(|i| {
                if i == self.nl {
                    SENTINEL
                } else {
                    (1.0 - self.lambda * i as f64 * self.dl).ln()
                }
            })
            .collect()
    }

    /// Liquidate-now values everywhere. Above the boundary row the singular
    /// column holds one step and then liquidates.
    pub fn initial_guess(&self) -> Vec<f64> {
        let n = self.nl + 1;
        let mut row = self.boundary_row();
        let mut v = row.clone();
        row[self.nl] = self.growth[self.nl] + self.absorb[self.nl];
        for _ in 0..self.nw {
            v.extend_from_slice(&row);
        }
        debug_assert_eq!(v.len(), n * (self.nw + 1));
        v
    }

    /// Row `r` of `v` read at the held leverages `h_j`; row 0 is exact.
    fn held_row(&self, v: &[f64], r: usize, out: &mut [f64]) {
        if r == 0 {
            out.copy_from_slice(&self.absorb);
            return;
        }
        let row = &v[r * (self.nl + 1)..(r + 1) * (self.nl + 1)];
        for ((o, &i), &b) in out.iter_mut().zip(&self.idx).zip(&self.wt) {
            *o = (1.0 - b) * row[i] + b * row[i + 1];
        }
    }

    /// Where a move from row `r` lands: `None` for absorption, otherwise the
    /// lower row and the weight of the row above it.
    #[inline]
    fn landing(&self, r: usize, m: Move) -> Option<(usize, f64)> {
        let q = r as isize + m.off;
        if q < 0 || (q == 0 && m.frac == 0.0) {
            None
        } else if q as usize >= self.nw {
            Some((self.nw, 0.0))
        } else {
            Some((q as usize, m.frac))
        }
    }

    fn apply_row(&self, held: &[f64], r: usize, out: &mut [f64]) {
        let n = self.nl + 1;
        let rows = |m: Move| -> (&[f64], &[f64], f64) {
            match self.landing(r, m) {
                None => (&self.absorb, &self.absorb, 0.0),
                Some((q, f)) => {
                    let lo = &held[q * n..(q + 1) * n];
                    let hi = if f > 0.0 { &held[(q + 1) * n..(q + 2) * n] } else { lo };
                    (lo, hi, f)
                }
            }
        };
        let (u0, u1, fu) = rows(self.moves[0]);
        let (d0, d1, fd) = rows(self.moves[1]);
        for j in 0..n {
            let up = (1.0 - fu) * u0[j] + fu * u1[j];
            let down = (1.0 - fd) * d0[j] + fd * d1[j];
            out[j] = self.growth[j] + 0.5 * (up + down);
        }
        // Suffix maximum: free buys reach any l' >= l. `>=` keeps the
        // smallest maximizer, so rows are exactly flat below the boundary.
        let mut best = f64::NEG_INFINITY;
        for c in out.iter_mut().rev() {
            if *c >= best {
                best = *c;
            }
            *c = best;
        }
    }

    /// `out = T v` using `held` as scratch of the same length; the `w = 0`
    /// row is copied through. Returns the sup-norm change over the iterated
    /// rows.
    pub fn apply_with_scratch(&self, v: &[f64], out: &mut [f64], held: &mut [f64]) -> f64 {
        let n = self.nl + 1;
        assert_eq!(v.len(), self.len());
        assert_eq!(out.len(), self.len());
        assert_eq!(held.len(), self.len());
        held.par_chunks_mut(n)
            .enumerate()
            .for_each(|(r, row)| self.held_row(v, r, row));
        let held = &*held;
        out[..n].copy_from_slice(&v[..n]);
        out[n..]
            .par_chunks_mut(n)
            .enumerate()
            .map(|(k, row)| {
                let r = k + 1;
                self.apply_row(held, r, row);
                row.iter()
                    .zip(&v[r * n..(r + 1) * n])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `out = T v`; see [`BellmanOperator::apply_with_scratch`].
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let mut held = vec![0.0; self.len()];
        self.apply_with_scratch(v, out, &mut held)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(v, &mut out);
        out
    }
}

/// Value iteration from the liquidate-now guess until the sup-norm change
/// of a sweep falls below `config.tol`.
pub fn solve_value_function(costs: &CostSpec, config: &SolverConfig) -> Result<ValueGrid> {
    let start = std::time::Instant::now();
    let op = BellmanOperator::new(costs, config)?;
    let mut v = op.initial_guess();
    let mut next = vec![0.0; op.len()];
    let mut held = vec![0.0; op.len()];
    let mut deltas = Vec::new();
    let mut delta = f64::INFINITY;
    while deltas.len() < config.max_iter {
        delta = op.apply_with_scratch(&v, &mut next, &mut held);
        std::mem::swap(&mut v, &mut next);
        deltas.push(delta);
        if !delta.is_finite() {
            return Err(Error::NotConverged {
                iterations: deltas.len(),
                delta,
            });
        }
        if delta < config.tol {
            break;
        }
    }
    if !(delta < config.tol) {
        return Err(Error::NotConverged {
            iterations: deltas.len(),
            delta,
        });
    }
    let l_grid: Vec<f64> = (0..=op.nl).map(|i| i as f64 * op.dl).collect();
    let w_grid: Vec<f64> = (0..=op.nw).map(|r| r as f64 * op.dw).collect();
    let mut grid = ValueGrid {
        l_grid,
        w_grid,
        v,
        ell_boundary: Vec::new(),
        meta: SolveMeta {
            lambda: op.lambda,
            dl: op.dl,
            dw: op.dw,
            dt: op.dt,
            w_max: config.w_max,
            tol: config.tol,
            iterations: deltas.len(),
            final_delta: delta,
            elapsed_secs: start.elapsed().as_secs_f64(),
            deltas,
        },
    };
    grid.ell_boundary = super::policy::raw_boundary(&grid, super::policy::DEFAULT_EPS_POL);
    Ok(grid)
}

//! CSV and JSON artifacts: sample paths with strategies, policies, and value
//! grids. Floats are written in shortest round-trip form, so reading a file
//! back reproduces the values bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dp::{SolveMeta, ValueGrid};
use crate::error::{Error, Result};
use crate::strategies::LeveragePolicy;
use crate::trading::{CostSpec, DriverKind, SamplePath, StrategyPath};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON companion of a path CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnvelope {
    pub schema_version: u32,
    pub kind: DriverKind,
    pub lambda: f64,
    pub seed: Option<u64>,
    pub stop_index: usize,
    pub censored: bool,
    pub n_points: usize,
    /// Holdings before the first trade, when a strategy is attached.
    pub pre: Option<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    t: f64,
    driver: f64,
    #[serde(rename = "S")]
    s: f64,
    phi0: Option<f64>,
    phi1: Option<f64>,
    buy: Option<f64>,
    sell: Option<f64>,
}

/// Writes the path (and strategy, if any) as CSV and returns its envelope.
pub fn write_path_csv<W: Write>(
    out: W,
    path: &SamplePath,
    strategy: Option<&StrategyPath>,
    costs: &CostSpec,
) -> Result<PathEnvelope> {
    if let Some(s) = strategy {
        if s.len() != path.len() {
            return Err(Error::GridMismatch(format!(
                "strategy {} vs path {}",
                s.len(),
                path.len()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for k in 0..path.len() {
        w.serialize(PathRow {
            t: path.times()[k],
            driver: path.driver()[k],
            s: path.price()[k],
            phi0: strategy.map(|s| s.phi0()[k]),
            phi1: strategy.map(|s| s.phi1()[k]),
            buy: strategy.map(|s| s.buys()[k]),
            sell: strategy.map(|s| s.sells()[k]),
        })?;
    }
    w.flush()?;
    Ok(PathEnvelope {
        schema_version: SCHEMA_VERSION,
        kind: path.kind(),
        lambda: costs.lambda(),
        seed: path.seed(),
        stop_index: path.stop_index(),
        censored: path.censored(),
        n_points: path.len(),
        pre: strategy.map(|s| (s.phi0_pre(), s.phi1_pre())),
    })
}

/// Reads a path CSV written by [`write_path_csv`].
pub fn read_path_csv<R: Read>(input: R, env: &PathEnvelope) -> Result<(SamplePath, Option<StrategyPath>)> {
    let mut rd = csv::Reader::from_reader(input);
    let rows: Vec<PathRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() != env.n_points {
        return Err(Error::GridMismatch(format!(
            "{} rows, envelope says {}",
            rows.len(),
            env.n_points
        )));
    }
    let path = SamplePath::new(
        env.kind,
        rows.iter().map(|r| r.t).collect(),
        rows.iter().map(|r| r.driver).collect(),
        rows.iter().map(|r| r.s).collect(),
        env.stop_index,
        env.seed,
        env.censored,
    )?;
    let strategy = match env.pre {
        None => None,
        Some((p0, p1)) => {
            let col = |f: fn(&PathRow) -> Option<f64>| -> Result<Vec<f64>> {
                rows.iter()
                    .map(|r| f(r).ok_or_else(|| Error::GridMismatch("missing strategy column".into())))
                    .collect()
            };
            Some(StrategyPath::from_holdings(col(|r| r.phi0)?, col(|r| r.phi1)?, p0, p1)?)
        }
    };
    Ok((path, strategy))
}

fn write_json<T: Serialize>(file: &Path, value: &T) -> Result<()> {
    let mut f = File::create(file)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`.
pub fn write_path_files(
    dir: &Path,
    stem: &str,
    path: &SamplePath,
    strategy: Option<&StrategyPath>,
    costs: &CostSpec,
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let env = write_path_csv(File::create(&csv_path)?, path, strategy, costs)?;
    write_json(&json_path, &env)?;
    Ok((csv_path, json_path))
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyRow {
    w: f64,
    ell: f64,
}

pub fn write_policy_csv<W: Write>(out: W, policy: &LeveragePolicy) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (&wn, &l) in policy.w_nodes().iter().zip(policy.ell_nodes()) {
        w.serialize(PolicyRow { w: wn, ell: l })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `(w, ell)` table; validation is that of [`LeveragePolicy::new`].
pub fn read_policy_csv<R: Read>(input: R, costs: &CostSpec) -> Result<LeveragePolicy> {
    let mut rd = csv::Reader::from_reader(input);
    let rows: Vec<PolicyRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    LeveragePolicy::new(
        rows.iter().map(|r| r.w).collect(),
        rows.iter().map(|r| r.ell).collect(),
        costs,
    )
}

/// JSON companion of a value-grid CSV. Wall-clock time is left out so that
/// identical solves give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub schema_version: u32,
    pub lambda: f64,
    pub dl: f64,
    pub dw: f64,
    pub dt: f64,
    pub w_max: f64,
    pub tol: f64,
    pub iterations: usize,
    pub final_delta: f64,
    pub n_l: usize,
    pub n_w: usize,
    pub ell_boundary: Vec<f64>,
    /// Every `deltas_every`-th sweep delta, starting with the first.
    pub deltas_every: usize,
    pub deltas: Vec<f64>,
}

impl GridMeta {
    pub fn from_grid(grid: &ValueGrid, deltas_every: usize) -> Self {
        let m = &grid.meta;
        let every = deltas_every.max(1);
        Self {
            schema_version: SCHEMA_VERSION,
            lambda: m.lambda,
            dl: m.dl,
            dw: m.dw,
            dt: m.dt,
            w_max: m.w_max,
            tol: m.tol,
            iterations: m.iterations,
            final_delta: m.final_delta,
            n_l: grid.n_l(),
            n_w: grid.n_w(),
            ell_boundary: grid.ell_boundary.clone(),
            deltas_every: every,
            deltas: m.deltas.iter().step_by(every).copied().collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    l: f64,
    w: f64,
    v: f64,
}

/// Long-format `(l, w, v)` rows, `l` varying fastest.
pub fn write_value_grid_csv<W: Write>(out: W, grid: &ValueGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (r, &wn) in grid.w_grid.iter().enumerate() {
        for (i, &l) in grid.l_grid.iter().enumerate() {
            w.serialize(GridRow {
                l,
                w: wn,
                v: grid.at(i, r),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_value_grid_csv<R: Read>(input: R, meta: &GridMeta) -> Result<ValueGrid> {
    let mut rd = csv::Reader::from_reader(input);
    let rows: Vec<GridRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() != meta.n_l * meta.n_w {
        return Err(Error::GridMismatch(format!(
            "{} rows for a {} x {} grid",
            rows.len(),
            meta.n_l,
            meta.n_w
        )));
    }
    let l_grid: Vec<f64> = rows[..meta.n_l].iter().map(|r| r.l).collect();
    let w_grid: Vec<f64> = rows.iter().step_by(meta.n_l).map(|r| r.w).collect();
    Ok(ValueGrid {
        l_grid,
        w_grid,
        v: rows.iter().map(|r| r.v).collect(),
        ell_boundary: meta.ell_boundary.clone(),
        meta: SolveMeta {
            lambda: meta.lambda,
            dl: meta.dl,
            dw: meta.dw,
            dt: meta.dt,
            w_max: meta.w_max,
            tol: meta.tol,
            iterations: meta.iterations,
            final_delta: meta.final_delta,
            elapsed_secs: 0.0,
            deltas: meta.deltas.clone(),
        },
    })
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`.
pub fn write_value_grid_files(
    dir: &Path,
    stem: &str,
    grid: &ValueGrid,
    deltas_every: usize,
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_value_grid_csv(File::create(&csv_path)?, grid)?;
    write_json(&json_path, &GridMeta::from_grid(grid, deltas_every))?;
    Ok((csv_path, json_path))
}

//! Monte-Carlo plumbing: estimates with provenance and reproducible seeding.
//!
//! Paths are processed in chunks of [`CHUNK`]. Chunk `c` draws from a
//! ChaCha8 generator keyed by the master seed with stream id `c`, so results
//! are identical for any worker count and any scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type McRng = ChaCha8Rng;

/// Paths per independent random stream.
pub const CHUNK: usize = 4096;

/// Mean and standard error of a Monte-Carlo quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
    pub seed: u64,
    /// Samples that were `-inf` (e.g. log of a zero liquidation value).
    /// When positive, `mean` is `-inf` and `std_err` is NaN.
    pub non_finite: usize,
}

impl McEstimate {
    /// z-score of the estimate against a reference value.
    pub fn z_against(&self, reference: f64) -> f64 {
        z_score(self.mean - reference, self.std_err)
    }

    pub fn is_finite(&self) -> bool {
        self.non_finite == 0 && self.mean.is_finite()
    }
}

/// `diff / se`, with the zero-variance cases mapped to 0 or ±inf.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Generator for random stream `stream` of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Running sums for mean and variance; merging is order-dependent only in
/// floating-point rounding, and we always merge in chunk order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    neg_inf: usize,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            self.neg_inf += 1;
            return;
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        self.neg_inf += other.neg_inf;
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            let neg = self.neg_inf;
            *self = *other;
            self.neg_inf = neg;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub(crate) fn estimate(&self, seed: u64) -> McEstimate {
        let total = self.n + self.neg_inf;
        if self.neg_inf > 0 {
            return McEstimate {
                mean: f64::NEG_INFINITY,
                std_err: f64::NAN,
                n: total,
                seed,
                non_finite: self.neg_inf,
            };
        }
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        McEstimate {
            mean: self.mean,
            std_err: (var / self.n as f64).sqrt(),
            n: total,
            seed,
            non_finite: 0,
        }
    }
}

fn chunks(n: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
    let count = n.div_ceil(CHUNK);
    (0..count)
        .into_par_iter()
        .map(move |c| (c as u64, CHUNK.min(n - c * CHUNK)))
}

/// Mean and standard error of `sample` over `n` independent draws.
/// `sample` may return `-inf`; any other non-finite value is an error.
pub fn estimate<F>(n: usize, seed: u64, sample: F) -> Result<McEstimate>
where
    F: Fn(&mut McRng) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(invalid("Monte-Carlo sample count must be positive"));
    }
    let parts: Vec<Result<Moments>> = chunks(n)
        .map(|(c, len)| {
            let mut rng = stream_rng(seed, c);
            let mut m = Moments::default();
            for _ in 0..len {
                let x = sample(&mut rng)?;
                if x.is_nan() || x == f64::INFINITY {
                    return Err(invalid(format!("sample evaluated to {x}")));
                }
                m.push(x);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.estimate(seed))
}

/// Collects `n` draws of `sample` in path order.
pub fn collect<T, F>(n: usize, seed: u64, sample: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut McRng) -> Result<T> + Sync,
{
    let parts: Vec<Result<Vec<T>>> = chunks(n)
        .map(|(c, len)| {
            let mut rng = stream_rng(seed, c);
            (0..len).map(|_| sample(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Sample mean and standard error of a slice.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mut m = Moments::default();
    for &x in xs {
        m.push(x);
    }
    let e = m.estimate(0);
    (e.mean, e.std_err)
}

/// Sample variance and a standard error for it from the fourth central moment.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (n - 1.0);
    let mu4 = m4 / n;
    let s2 = m2 / n;
    let se = ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

use thiserror::Error;

/// Errors produced by the trading calculus, samplers, dual checks and the DP solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-positive price {price} at index {index}")]
    NonPositivePrice { index: usize, price: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("leverage undefined: book value phi0 + phi1*S is zero")]
    UndefinedLeverage,

    #[error("path censored: no absorption before t_cap = {t_cap}")]
    Censored { t_cap: f64 },

    #[error("policy value {value} exceeds the leverage cap {cap}")]
    PolicyOutOfRange { value: f64, cap: f64 },

    #[error("no surviving paths at the conditioning time")]
    NoSurvivors,

    #[error("degenerate sample: {0}")]
    DegenerateVariance(String),

    #[error("deflator has y0 = 0 with y1 = {y1} at index {index}")]
    DegenerateDeflator { index: usize, y1: f64 },

    #[error("strategy inadmissible at index {index} (liquidation value {value})")]
    Inadmissible { index: usize, value: f64 },

    #[error("value iteration did not converge: {iterations} sweeps, last delta {delta:e}")]
    NotConverged { iterations: usize, delta: f64 },

    #[error("stability condition violated: {0}")]
    Unstable(String),

    #[error("policy never saturates at 1/lambda on the grid; raise w_max")]
    NoSaturation,

    #[error("policy under-resolved: isotonic correction {discrepancy} exceeds bound {bound}")]
    UnderResolved { discrepancy: f64, bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: operands live on different periodic grids")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("multiplier parity violated: defect {defect:.3e} exceeds {tolerance:.3e}")]
    Parity { defect: f64, tolerance: f64 },
    #[error("density must be positive everywhere (min n = {min:.6e})")]
    NonPositiveDensity { min: f64 },
    #[error("Newton iteration diverging at iteration {iteration} (residual {residual:.3e})")]
    Divergence { iteration: usize, residual: f64 },
    #[error("no convergence within {max_iter} iterations (residual {residual:.3e})")]
    MaxIterations { max_iter: usize, residual: f64 },
    #[error("instability: {0}")]
    Instability(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("resonant denominator: {0}")]
    Resonance(String),
    #[error("envelope interpolation condition violated: {0}")]
    Interpolation(String),
    #[error("kernel evaluated outside its declared support: {0}")]
    OutOfSupport(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for configuration key `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

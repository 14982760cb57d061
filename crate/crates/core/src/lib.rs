//! High-dimensional tail index regression.
//!
//! The conditional tail of a positive response is modeled as Pareto with
//! exponent `alpha(x) = exp(x'theta)` above a threshold `omega`. The crate
//! provides
//!
//! - exceedance extraction and log-log diagnostics ([`data`]),
//! - the tail likelihood with score and Hessian ([`likelihood`]),
//! - the L1-penalized estimator ([`lasso`]),
//! - debiased per-coordinate inference by sample splitting or cross-fitting
//!   ([`debias`]),
//! - conditional extreme quantiles with delta-method intervals ([`quantile`]),
//! - the Monte Carlo designs used to check coverage ([`simulate`]),
//! - a text-to-indicator-matrix pipeline ([`text`]),
//! - file-level commands behind the `tailreg` binary ([`cli`]).

pub mod cli;
pub mod data;
pub mod debias;
pub mod error;
pub mod lasso;
pub mod likelihood;
pub mod quantile;
pub mod simulate;
pub mod text;

#[cfg(test)]
mod testutil;

pub use data::{Dataset, Design, SparseBinary, TailSample};
pub use error::{Error, Result};
pub use lasso::{LassoConfig, LassoFit, Penalty};

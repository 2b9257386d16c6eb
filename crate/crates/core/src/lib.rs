//! Sparse partial-correlation precision estimation and minimum-variance
//! portfolio construction.
//!
//! The crate is organized around a single pipeline:
//!
//! 1. **Estimate** a precision matrix from a returns panel, either with the
//!    joint sparse partial-correlation estimator ([`space`]) or with one of
//!    the baselines ([`baselines`]: nodewise regression, Ledoit-Wolf
//!    shrinkage).
//! 2. **Construct** global-minimum-variance or mean-constrained
//!    minimum-variance portfolio weights in closed form ([`portfolio`]).
//! 3. **Evaluate** the result, either against a known ground truth
//!    ([`metrics`], [`simulation`]) or out of sample on historical data with
//!    transaction costs ([`backtest`]).
//!
//! All estimators consume a [`types::ReturnsMatrix`] and produce a
//! [`types::PrecisionMatrix`]; the portfolio solvers consume precision
//! matrices directly so that no intermediate covariance inversion is needed.

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`: the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod baselines;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod portfolio;
pub mod simulation;
pub mod space;
pub mod types;

pub use error::{Error, Result};

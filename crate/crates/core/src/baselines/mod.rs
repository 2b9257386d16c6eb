//! Baseline precision estimators used for comparison: per-node lasso
//! regressions ([`nodewise`]) and linear shrinkage of the sample covariance
//! ([`ledoit_wolf`]).

mod ledoit_wolf;
mod nodewise;

pub use ledoit_wolf::{fit_ledoit_wolf, LedoitWolfFit};
pub use nodewise::{fit_nodewise, NodewiseConfig, NodewiseFit, NodewiseLambda};

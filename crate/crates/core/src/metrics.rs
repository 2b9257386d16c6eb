//! Estimation-error metrics against a known ground truth and out-of-sample
//! performance summaries.
//!
//! Simulation metrics compare an estimated weight vector `w^` (built from an
//! estimated covariance `Sigma^`) to the truth `(w, Sigma)`:
//!
//! * weight error `E_W = || w^ - w ||_1`,
//! * variance error `E_V = | w^' Sigma^ w^ / (w' Sigma w) - 1 |`,
//! * risk error `E_R = | w^' (Sigma^ - Sigma) w^ |`.
//!
//! Out-of-sample performance of a realized return series uses the sample
//! mean, sample variance (denominator `T - 1`) and their ratio as the
//! Sharpe ratio. Transaction costs enter through [`net_return`]: a trade
//! from drifted holdings `w+` into new weights `w_next` costs
//! `c * (1 + gross) * || w_next - w+ ||_1` of period wealth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::portfolio::WeightVector;
use crate::types::{CovarianceMatrix, PrecisionMatrix};

/// Ground-truth comparison of one estimated portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetrics {
    /// `|| w^ - w ||_1`.
    pub weight_error: f64,
    /// `| w^' Sigma^ w^ / (w' Sigma w) - 1 |`.
    pub variance_error: f64,
    /// `| w^' (Sigma^ - Sigma) w^ |`.
    pub risk_error: f64,
}

/// Out-of-sample summary of a realized return series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Sample mean per period.
    pub mean_return: f64,
    /// Sample variance per period (denominator `T - 1`).
    pub variance: f64,
    /// `mean_return / sqrt(variance)`.
    pub sharpe: f64,
    /// Mean L1 rebalancing distance per period; only meaningful for the
    /// with-cost block of a backtest, `None` otherwise.
    pub turnover: Option<f64>,
    /// Whether the series had transaction costs applied.
    pub with_cost: bool,
    /// Proportional cost rate the series was computed at (decimal, e.g.
    /// `0.005` for 50 basis points); zero when `with_cost` is false.
    pub cost_rate: f64,
}

/// `|| w^ - w ||_1`. Dimensions must agree.
pub fn weight_error(estimated: &WeightVector, truth: &WeightVector) -> Result<f64> {
    if estimated.dim() != truth.dim() {
        return Err(Error::InvalidInput(format!(
            "weight vectors have different lengths: {} vs {}",
            estimated.dim(),
            truth.dim()
        )));
    }
    Ok(estimated.l1_distance(truth))
}

/// `| w^' Sigma^ w^ / (w' Sigma w) - 1 |`. The true portfolio variance must
/// be strictly positive.
pub fn variance_error(
    estimated: &WeightVector,
    sigma_hat: &CovarianceMatrix,
    truth: &WeightVector,
    sigma_true: &CovarianceMatrix,
) -> Result<f64> {
    check_dims(estimated, sigma_hat)?;
    check_dims(truth, sigma_true)?;
    let denom = quadratic_form(truth, sigma_true);
    if !(denom > 0.0) {
        return Err(Error::ZeroVariance(format!(
            "true portfolio variance is {denom}; variance error is undefined"
        )));
    }
    Ok((quadratic_form(estimated, sigma_hat) / denom - 1.0).abs())
}

/// `| w^' (Sigma^ - Sigma) w^ |`: both quadratic forms are evaluated at the
/// estimated weights.
pub fn risk_error(
    estimated: &WeightVector,
    sigma_hat: &CovarianceMatrix,
    sigma_true: &CovarianceMatrix,
) -> Result<f64> {
    check_dims(estimated, sigma_hat)?;
    check_dims(estimated, sigma_true)?;
    Ok((quadratic_form(estimated, sigma_hat) - quadratic_form(estimated, sigma_true)).abs())
}

fn check_dims(w: &WeightVector, s: &CovarianceMatrix) -> Result<()> {
    if w.dim() != s.dim() {
        return Err(Error::InvalidInput(format!(
            "weight vector has {} entries but the covariance is {} x {}",
            w.dim(),
            s.dim(),
            s.dim()
        )));
    }
    Ok(())
}

fn quadratic_form(w: &WeightVector, s: &CovarianceMatrix) -> f64 {
    (s.values() * w.values()).dot(w.values())
}

/// The covariance implied by a precision estimate, for use inside the
/// variance/risk errors of precision-side estimators.
///
/// An asymmetric (nodewise) estimate is symmetrized by averaging first. A
/// non-positive-definite estimate is repaired by flooring its eigenvalues
/// (see [`linalg::floored_inverse`]); the returned flag is `true` when that
/// repair was needed.
pub fn covariance_from_precision(omega: &PrecisionMatrix) -> Result<(CovarianceMatrix, bool)> {
    let sym = if omega.is_symmetric() {
        omega.values().clone()
    } else {
        linalg::symmetrize(omega.values())
    };
    let (inv, repaired) = linalg::floored_inverse(&sym);
    Ok((CovarianceMatrix::new(inv)?, repaired))
}

/// Sample mean, variance and Sharpe ratio of a realized per-period return
/// series. Needs at least 2 periods and nonzero variance.
pub fn oos_performance(realized: &[f64]) -> Result<PerformanceReport> {
    if realized.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 realized returns, got {}",
            realized.len()
        )));
    }
    if realized.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(
            "realized returns contain a non-finite entry".into(),
        ));
    }
    let t = realized.len() as f64;
    let mean = realized.iter().sum::<f64>() / t;
    let variance = realized.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1.0);
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance(
            "realized returns are constant; Sharpe ratio is undefined".into(),
        ));
    }
    Ok(PerformanceReport {
        mean_return: mean,
        variance,
        sharpe: mean / variance.sqrt(),
        turnover: None,
        with_cost: false,
        cost_rate: 0.0,
    })
}

/// One period's net return: the gross return `w_t' x_next` minus the
/// proportional cost of trading end-of-period wealth from the drifted
/// holdings `w_drift` into `w_next`:
///
/// ```text
/// net = gross - cost_rate * (1 + gross) * || w_next - w_drift ||_1
/// ```
///
/// All three weight vectors and the return vector must share one dimension;
/// `cost_rate` is a decimal fraction (`0.005` for 50 basis points).
pub fn net_return(
    w_t: &WeightVector,
    x_next: &[f64],
    w_next: &WeightVector,
    w_drift: &[f64],
    cost_rate: f64,
) -> Result<f64> {
    let p = w_t.dim();
    if x_next.len() != p || w_next.dim() != p || w_drift.len() != p {
        return Err(Error::InvalidInput(format!(
            "net_return inputs disagree on dimension: weights {p}, returns {}, next {}, drift {}",
            x_next.len(),
            w_next.dim(),
            w_drift.len()
        )));
    }
    if !(0.0..1.0).contains(&cost_rate) {
        return Err(Error::InvalidInput(format!(
            "cost rate must be in [0, 1), got {cost_rate}"
        )));
    }
    let gross: f64 = w_t.values().iter().zip(x_next).map(|(w, x)| w * x).sum();
    let trade: f64 = w_next
        .values()
        .iter()
        .zip(w_drift)
        .map(|(w, d)| (w - d).abs())
        .sum();
    Ok(gross - cost_rate * (1.0 + gross) * trade)
}

/// Mean L1 distance over a sequence of (target, pre-trade) weight pairs.
pub fn turnover(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "turnover needs at least one rebalance pair".into(),
        ));
    }
    let mut total = 0.0;
    for (k, (target, pre)) in pairs.iter().enumerate() {
        if target.len() != pre.len() {
            return Err(Error::InvalidInput(format!(
                "rebalance pair {k} has mismatched lengths {} vs {}",
                target.len(),
                pre.len()
            )));
        }
        total += target
            .iter()
            .zip(pre)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

//! Closed-form minimum-variance portfolio construction.
//!
//! Both solvers consume a precision matrix directly, so no covariance
//! inversion happens downstream of estimation. With `omega` the precision
//! estimate, `one` the all-ones vector and `mu` a mean vector:
//!
//! * Global minimum variance:
//!   `w = omega one / (one' omega one)`, risk `1 / (one' omega one)`.
//! * Mean-constrained minimum variance at target `mu_star`:
//!   with `A = mu' omega one`, `B = mu' omega mu`, `C = one' omega one`,
//!   `D = B C - A^2`,
//!   `w = (B omega one - A omega mu + mu_star (C omega mu - A omega one)) / D`.
//!
//! For a symmetric positive-definite precision these weights satisfy
//! `sum(w) = 1` (and `w' mu = mu_star`) exactly up to floating-point
//! rounding. An asymmetric nodewise estimate is consumed verbatim; its
//! mean-constrained weights can miss the budget constraint by a term
//! proportional to the asymmetry, which is deliberate — the estimate is
//! evaluated as produced, not repaired.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CovarianceMatrix, MeanVector, PrecisionMatrix};

/// Denominators smaller than this (in absolute value) are treated as
/// degenerate rather than divided by.
const DEGENERACY_TOL: f64 = 1e-12;

/// Which optimization produced a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortfolioKind {
    /// Global minimum variance: minimize `w' Sigma w` subject to
    /// `sum(w) = 1`.
    Gmv,
    /// Minimum variance subject to `sum(w) = 1` and `w' mu = mu_star`.
    Markowitz,
}

impl PortfolioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PortfolioKind::Gmv => "gmv",
            PortfolioKind::Markowitz => "markowitz",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gmv" => Ok(PortfolioKind::Gmv),
            "markowitz" => Ok(PortfolioKind::Markowitz),
            other => Err(Error::InvalidInput(format!(
                "unknown portfolio kind {other:?} (expected gmv or markowitz)"
            ))),
        }
    }
}

impl std::fmt::Display for PortfolioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Target mean return for the mean-constrained solver, in per-period
/// decimal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTarget {
    pub mu_star: f64,
}

impl PortfolioTarget {
    pub fn new(mu_star: f64) -> Result<Self> {
        if !mu_star.is_finite() {
            return Err(Error::InvalidInput(format!(
                "target mean must be finite, got {mu_star}"
            )));
        }
        Ok(Self { mu_star })
    }
}

/// Fully invested portfolio weights (long and short positions allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: DVector<f64>,
    kind: PortfolioKind,
}

impl WeightVector {
    /// Wraps solver output. Entries must be finite; the budget constraint is
    /// a solver guarantee (exact up to rounding for symmetric inputs) and is
    /// not re-enforced here, so that asymmetric estimates can be evaluated
    /// exactly as produced.
    pub fn new(values: DVector<f64>, kind: PortfolioKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "weight vector must be non-empty".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "weight vector contains a non-finite entry".into(),
            ));
        }
        Ok(Self { values, kind })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn kind(&self) -> PortfolioKind {
        self.kind
    }

    /// Sum of weights; `1` up to rounding for symmetric precision inputs.
    pub fn budget(&self) -> f64 {
        self.values.sum()
    }

    /// L1 distance to another weight vector of the same dimension.
    pub fn l1_distance(&self, other: &WeightVector) -> f64 {
        (&self.values - &other.values).abs().sum()
    }
}

/// Global-minimum-variance weights and the implied portfolio variance
/// `1 / (one' omega one)` at the supplied precision.
pub fn gmv_weights(omega: &PrecisionMatrix) -> Result<(WeightVector, f64)> {
    let p = omega.dim();
    let one = DVector::from_element(p, 1.0);
    let omega_one = omega.values() * &one;
    let c = omega_one.sum();
    if c.abs() < DEGENERACY_TOL || !c.is_finite() {
        return Err(Error::Degenerate(format!(
            "one' omega one = {c}; precision matrix cannot price the budget constraint"
        )));
    }
    let w = omega_one / c;
    Ok((WeightVector::new(w, PortfolioKind::Gmv)?, 1.0 / c))
}

/// Mean-constrained minimum-variance weights at target `mu_star`, and the
/// implied portfolio variance.
///
/// The variance is `w' Sigma w` when `sigma` is supplied, otherwise
/// `w' omega^{-1} w` via a linear solve against the precision.
pub fn markowitz_weights(
    omega: &PrecisionMatrix,
    mu: &MeanVector,
    target: PortfolioTarget,
    sigma: Option<&CovarianceMatrix>,
) -> Result<(WeightVector, f64)> {
    let p = omega.dim();
    if mu.dim() != p {
        return Err(Error::InvalidInput(format!(
            "mean vector has {} entries but the precision matrix is {p} x {p}",
            mu.dim()
        )));
    }
    if let Some(s) = sigma {
        if s.dim() != p {
            return Err(Error::InvalidInput(format!(
                "covariance is {} x {} but the precision matrix is {p} x {p}",
                s.dim(),
                s.dim()
            )));
        }
    }
    let one = DVector::from_element(p, 1.0);
    let omega_one = omega.values() * &one;
    let omega_mu = omega.values() * mu.values();
    let a = mu.values().dot(&omega_one);
    let b = mu.values().dot(&omega_mu);
    let c = one.dot(&omega_one);
    let d = b * c - a * a;
    if d.abs() < DEGENERACY_TOL || !d.is_finite() {
        return Err(Error::Degenerate(format!(
            "B*C - A^2 = {d}; mean vector is collinear with the ones vector"
        )));
    }
    let w = (omega_one.clone() * b - omega_mu.clone() * a
        + (omega_mu * c - omega_one * a) * target.mu_star)
        / d;
    let weights = WeightVector::new(w, PortfolioKind::Markowitz)?;

    let risk = match sigma {
        Some(s) => (s.values() * weights.values()).dot(weights.values()),
        None => {
            let y = omega
                .values()
                .clone()
                .lu()
                .solve(weights.values())
                .ok_or_else(|| {
                    Error::Degenerate("precision matrix is singular; cannot price risk".into())
                })?;
            weights.values().dot(&y)
        }
    };
    Ok((weights, risk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EstimatorTag;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn identity_precision(p: usize) -> PrecisionMatrix {
        PrecisionMatrix::new(DMatrix::identity(p, p), EstimatorTag::Exact).unwrap()
    }

    #[test]
    fn gmv_on_identity_is_equal_weight() {
        let (w, risk) = gmv_weights(&identity_precision(4)).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(w.values()[i], 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(risk, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w.budget(), 1.0, epsilon = 1e-15);
        assert_eq!(w.kind(), PortfolioKind::Gmv);
    }

    #[test]
    fn gmv_overweights_the_low_variance_asset() {
        // Sigma = diag(1, 4) so omega = diag(1, 0.25): w = (0.8, 0.2).
        let omega = PrecisionMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]),
            EstimatorTag::Exact,
        )
        .unwrap();
        let (w, risk) = gmv_weights(&omega).unwrap();
        assert_abs_diff_eq!(w.values()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(w.values()[1], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(risk, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn markowitz_meets_both_constraints_and_dominates_gmv_risk() {
        // A well-conditioned random-ish SPD precision and a non-degenerate
        // mean vector.
        let omega = PrecisionMatrix::new(
            DMatrix::from_row_slice(3, 3, &[2.0, -0.3, 0.1, -0.3, 1.5, -0.2, 0.1, -0.2, 1.8]),
            EstimatorTag::Exact,
        )
        .unwrap();
        let mu = MeanVector::new(DVector::from_vec(vec![0.01, 0.002, -0.004])).unwrap();
        let target = PortfolioTarget::new(0.005).unwrap();
        let (w, risk) = markowitz_weights(&omega, &mu, target, None).unwrap();
        assert_abs_diff_eq!(w.budget(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.values().dot(mu.values()), 0.005, epsilon = 1e-12);
        // The mean-constrained solution cannot beat the unconstrained
        // minimum-variance risk.
        let (_, gmv_risk) = gmv_weights(&omega).unwrap();
        assert!(risk >= gmv_risk - 1e-15);
    }

    #[test]
    fn markowitz_at_gmv_mean_recovers_gmv() {
        let omega = PrecisionMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.2, -0.4, -0.4, 0.9]),
            EstimatorTag::Exact,
        )
        .unwrap();
        let mu = MeanVector::new(DVector::from_vec(vec![0.01, 0.03])).unwrap();
        let (gmv, gmv_risk) = gmv_weights(&omega).unwrap();
        let gmv_mean = gmv.values().dot(mu.values());
        let (w, risk) =
            markowitz_weights(&omega, &mu, PortfolioTarget::new(gmv_mean).unwrap(), None).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(w.values()[i], gmv.values()[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(risk, gmv_risk, epsilon = 1e-12);
    }

    #[test]
    fn constant_mean_is_degenerate_for_markowitz() {
        let omega = identity_precision(3);
        let mu = MeanVector::new(DVector::from_element(3, 0.01)).unwrap();
        let r = markowitz_weights(&omega, &mu, PortfolioTarget::new(0.02).unwrap(), None);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn supplied_covariance_prices_risk() {
        // Sigma and omega are inverses, so both risk paths must agree.
        let sigma_m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let omega_m = crate::linalg::spd_inverse(&sigma_m).unwrap();
        let omega = PrecisionMatrix::new(omega_m, EstimatorTag::Exact).unwrap();
        let sigma = CovarianceMatrix::new(sigma_m).unwrap();
        let mu = MeanVector::new(DVector::from_vec(vec![0.02, 0.005])).unwrap();
        let t = PortfolioTarget::new(0.01).unwrap();
        let (_, risk_solve) = markowitz_weights(&omega, &mu, t, None).unwrap();
        let (_, risk_sigma) = markowitz_weights(&omega, &mu, t, Some(&sigma)).unwrap();
        assert_abs_diff_eq!(risk_solve, risk_sigma, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let omega = identity_precision(3);
        let mu = MeanVector::new(DVector::from_vec(vec![0.01, 0.02])).unwrap();
        assert!(markowitz_weights(&omega, &mu, PortfolioTarget::new(0.01).unwrap(), None).is_err());
        assert!(PortfolioTarget::new(f64::INFINITY).is_err());
    }
}

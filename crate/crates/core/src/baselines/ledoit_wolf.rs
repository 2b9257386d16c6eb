//! Linear shrinkage of the sample covariance toward a scaled identity.
//!
//! With `S` the sample covariance on centered columns (denominator `n`) and
//! `x_t` the centered period rows,
//!
//! ```text
//! m       = tr(S) / p
//! d^2     = || S - m I ||_F^2 / p
//! bbar^2  = (1 / (n^2 p)) * sum_t || x_t x_t' - S ||_F^2
//! b^2     = min(bbar^2, d^2)
//! Sigma^  = (b^2 / d^2) * m I + (1 - b^2 / d^2) * S,
//! ```
//!
//! i.e. the sample covariance is pulled toward `m I` with intensity
//! `b^2 / d^2` in `[0, 1]`. The estimate is positive definite whenever the
//! intensity is positive, and its precision matrix is obtained by explicit
//! inversion.

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{CovarianceMatrix, EstimatorTag, PrecisionMatrix, ReturnsMatrix};

/// Result of a shrinkage fit.
#[derive(Debug, Clone)]
pub struct LedoitWolfFit {
    covariance: CovarianceMatrix,
    precision: PrecisionMatrix,
    shrinkage: f64,
}

impl LedoitWolfFit {
    /// The shrunk covariance estimate.
    pub fn covariance(&self) -> &CovarianceMatrix {
        &self.covariance
    }

    /// Inverse of the shrunk covariance, tagged [`EstimatorTag::LedoitWolf`].
    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    /// Shrinkage intensity `b^2 / d^2` in `[0, 1]`.
    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }
}

/// Fits the shrinkage estimator to a returns panel.
pub fn fit_ledoit_wolf(x: &ReturnsMatrix) -> Result<LedoitWolfFit> {
    let n = x.n_periods();
    let p = x.n_assets();
    let n_f = n as f64;
    let p_f = p as f64;

    // Center columns; sample covariance with denominator n.
    let mut z = x.values().clone();
    for j in 0..p {
        let mean = z.column(j).sum() / n_f;
        z.column_mut(j).add_scalar_mut(-mean);
    }
    let s = linalg::symmetrize(&(z.transpose() * &z / n_f));

    let m = s.trace() / p_f;
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!(
            "average sample variance is {m}; returns are constant"
        )));
    }
    let mut s_minus = s.clone();
    for i in 0..p {
        s_minus[(i, i)] -= m;
    }
    let d_sq = s_minus.norm_squared() / p_f;

    // sum_t || x_t x_t' - S ||_F^2 = sum_t ||x_t||^4 - n ||S||_F^2, using
    // S = (1/n) sum_t x_t x_t' to collapse the cross term.
    let s_norm_sq = s.norm_squared();
    let quartic: f64 = (0..n)
        .map(|t| {
            let row_sq: f64 = z.row(t).norm_squared();
            row_sq * row_sq
        })
        .sum();
    let bbar_sq = (quartic - n_f * s_norm_sq) / (n_f * n_f * p_f);
    let b_sq = bbar_sq.min(d_sq).max(0.0);

    // d^2 = 0 means S is already a multiple of the identity; any intensity
    // yields the same estimate, so pin it at 1 for a well-defined report.
    let shrinkage = if d_sq > 0.0 { b_sq / d_sq } else { 1.0 };
    let mut sigma = s * (1.0 - shrinkage);
    for i in 0..p {
        sigma[(i, i)] += shrinkage * m;
    }
    linalg::symmetrize_in_place(&mut sigma);

    let inv = linalg::spd_inverse(&sigma)
        .ok_or_else(|| Error::Degenerate("shrunk covariance is numerically singular".into()))?;

    Ok(LedoitWolfFit {
        covariance: CovarianceMatrix::new(sigma)?,
        precision: PrecisionMatrix::new(inv, EstimatorTag::LedoitWolf)?,
        shrinkage,
    })
}

/// Direct transcription of the `bbar^2` definition, kept for tests: the
/// production path uses the algebraically collapsed form.
#[cfg(test)]
fn bbar_sq_direct(z: &nalgebra::DMatrix<f64>, s: &nalgebra::DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let p = z.ncols();
    let mut acc = 0.0;
    for t in 0..n {
        let xt: nalgebra::DVector<f64> = z.row(t).transpose();
        let outer = &xt * xt.transpose();
        acc += (outer - s).norm_squared();
    }
    acc / ((n * n * p) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_panel(n: usize, p: usize, seed: u64) -> ReturnsMatrix {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(n, p, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.02 * z
        });
        ReturnsMatrix::from_values(values).unwrap()
    }

    fn centered(x: &ReturnsMatrix) -> DMatrix<f64> {
        let n = x.n_periods() as f64;
        let mut z = x.values().clone();
        for j in 0..x.n_assets() {
            let mean = z.column(j).sum() / n;
            z.column_mut(j).add_scalar_mut(-mean);
        }
        z
    }

    #[test]
    fn shrinkage_intensity_is_in_unit_interval() {
        for seed in [1, 2, 3] {
            for (n, p) in [(10, 4), (4, 10), (50, 8)] {
                let fit = fit_ledoit_wolf(&random_panel(n, p, seed)).unwrap();
                let a = fit.shrinkage();
                assert!((0.0..=1.0).contains(&a), "shrinkage {a} outside [0, 1]");
            }
        }
    }

    #[test]
    fn collapsed_bbar_matches_direct_definition() {
        let x = random_panel(12, 5, 9);
        let z = centered(&x);
        let n_f = 12.0;
        let s = linalg::symmetrize(&(z.transpose() * &z / n_f));
        let direct = bbar_sq_direct(&z, &s);
        let quartic: f64 = (0..12)
            .map(|t| {
                let r: f64 = z.row(t).norm_squared();
                r * r
            })
            .sum();
        let collapsed = (quartic - n_f * s.norm_squared()) / (n_f * n_f * 5.0);
        assert_abs_diff_eq!(direct, collapsed, epsilon = 1e-12 * direct.max(1.0));
    }

    #[test]
    fn estimate_is_pd_even_when_p_exceeds_n() {
        let x = random_panel(5, 12, 4);
        let fit = fit_ledoit_wolf(&x).unwrap();
        assert!(fit.covariance().is_positive_definite());
        assert!(fit.precision().is_symmetric());
        assert_eq!(fit.precision().source(), EstimatorTag::LedoitWolf);
        // Precision times covariance is the identity.
        let prod = fit.precision().values() * fit.covariance().values();
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn interpolates_between_sample_covariance_and_identity_target() {
        let x = random_panel(200, 3, 6);
        let fit = fit_ledoit_wolf(&x).unwrap();
        let z = centered(&x);
        let s = linalg::symmetrize(&(z.transpose() * &z / 200.0));
        let m = s.trace() / 3.0;
        let a = fit.shrinkage();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { m } else { 0.0 };
                let expect = a * target + (1.0 - a) * s[(i, j)];
                assert_abs_diff_eq!(fit.covariance().values()[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_panel_is_rejected() {
        let values = DMatrix::from_element(6, 3, 0.0);
        let x = ReturnsMatrix::from_values(values).unwrap();
        assert!(matches!(fit_ledoit_wolf(&x), Err(Error::Degenerate(_))));
    }
}

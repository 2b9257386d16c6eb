//! Core data types shared by every estimator, the portfolio solvers and the
//! simulation/backtest harnesses.
//!
//! Conventions used throughout the crate:
//!
//! * A returns panel is `n` periods (rows) by `p` assets (columns).
//! * A precision matrix `omega` is the inverse of a covariance matrix; the
//!   partial correlation between assets `i` and `j` is
//!   `rho_ij = -omega_ij / sqrt(omega_ii * omega_jj)`.
//! * Off-diagonal pairs `(i, j)` with `i < j` are stored in lexicographic
//!   order; see [`pair_index`] for the packed layout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Which estimator produced a precision matrix.
///
/// `Poet` is reserved so that externally produced rows can be merged into
/// study tables; no estimator in this crate emits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    SpaceUnweighted,
    SpaceWeighted,
    Nodewise,
    LedoitWolf,
    Exact,
    Poet,
}

impl EstimatorTag {
    /// Stable identifier used in file names, CSV cells and CLI flags.
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::SpaceUnweighted => "space-unweighted",
            EstimatorTag::SpaceWeighted => "space-weighted",
            EstimatorTag::Nodewise => "nodewise",
            EstimatorTag::LedoitWolf => "ledoit-wolf",
            EstimatorTag::Exact => "exact",
            EstimatorTag::Poet => "poet",
        }
    }

    /// Parses the identifier produced by [`EstimatorTag::as_str`].
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "space-unweighted" => Ok(EstimatorTag::SpaceUnweighted),
            "space-weighted" => Ok(EstimatorTag::SpaceWeighted),
            "nodewise" => Ok(EstimatorTag::Nodewise),
            "ledoit-wolf" => Ok(EstimatorTag::LedoitWolf),
            "exact" => Ok(EstimatorTag::Exact),
            "poet" => Ok(EstimatorTag::Poet),
            other => Err(Error::InvalidInput(format!(
                "unknown estimator tag {other:?} (expected space-unweighted, space-weighted, \
                 nodewise, ledoit-wolf, exact or poet)"
            ))),
        }
    }
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Packed index of the unordered pair `(i, j)`, `i < j`, among the
/// `p * (p - 1) / 2` off-diagonal pairs of a `p x p` symmetric matrix,
/// enumerated lexicographically: `(0,1), (0,2), ..., (0,p-1), (1,2), ...`.
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p, "pair_index requires i < j < p");
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// Iterator over all unordered pairs `(i, j)`, `i < j`, in the same
/// lexicographic order as [`pair_index`].
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| (i, j)))
}

/// Number of unordered off-diagonal pairs of a `p x p` matrix.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// A panel of simple returns: `n` periods by `p` assets, with distinct asset
/// labels and a strictly increasing period index.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    values: DMatrix<f64>,
    asset_labels: Vec<String>,
    period_index: Vec<String>,
}

impl ReturnsMatrix {
    /// Validates and wraps a panel. Requirements: `n >= 2`, `p >= 2`, all
    /// entries finite, `asset_labels` distinct and of length `p`,
    /// `period_index` strictly increasing (as strings) and of length `n`.
    pub fn new(
        values: DMatrix<f64>,
        asset_labels: Vec<String>,
        period_index: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = (values.nrows(), values.ncols());
        if n < 2 || p < 2 {
            return Err(Error::InvalidInput(format!(
                "returns panel must be at least 2 x 2, got {n} x {p}"
            )));
        }
        if asset_labels.len() != p {
            return Err(Error::InvalidInput(format!(
                "expected {p} asset labels, got {}",
                asset_labels.len()
            )));
        }
        if period_index.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} period labels, got {}",
                period_index.len()
            )));
        }
        if !linalg::all_finite(&values) {
            return Err(Error::InvalidInput(
                "returns panel contains a non-finite entry".into(),
            ));
        }
        for k in 1..asset_labels.len() {
            if asset_labels[..k].contains(&asset_labels[k]) {
                return Err(Error::InvalidInput(format!(
                    "duplicate asset label {:?}",
                    asset_labels[k]
                )));
            }
        }
        for k in 1..period_index.len() {
            if period_index[k] <= period_index[k - 1] {
                return Err(Error::InvalidInput(format!(
                    "period index must be strictly increasing, but {:?} follows {:?}",
                    period_index[k],
                    period_index[k - 1]
                )));
            }
        }
        Ok(Self {
            values,
            asset_labels,
            period_index,
        })
    }

    /// Convenience constructor that synthesizes `A0001..` asset labels and a
    /// zero-padded `t000001..` period index. Used by the simulators and in
    /// tests.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let labels = (0..values.ncols())
            .map(|j| format!("A{:04}", j + 1))
            .collect();
        let periods = (0..values.nrows())
            .map(|t| format!("t{:06}", t + 1))
            .collect();
        Self::new(values, labels, periods)
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }

    pub fn period_index(&self) -> &[String] {
        &self.period_index
    }

    /// One period of returns as an owned vector.
    pub fn period_row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// A contiguous window of `len` periods starting at row `start`, keeping
    /// asset labels and the corresponding slice of the period index.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_periods() {
            return Err(Error::InvalidInput(format!(
                "window [{start}, {}) exceeds {} periods",
                start + len,
                self.n_periods()
            )));
        }
        Self::new(
            self.values.rows(start, len).into_owned(),
            self.asset_labels.clone(),
            self.period_index[start..start + len].to_vec(),
        )
    }
}

/// A symmetric covariance matrix with strictly positive diagonal.
///
/// Positive definiteness is checked at construction and recorded rather than
/// enforced: sample covariances with `n <= p` are legitimately singular.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
    is_positive_definite: bool,
}

impl CovarianceMatrix {
    /// Validates (square, finite, diagonal > 0), forces exact symmetry by
    /// averaging, and records whether the matrix is numerically positive
    /// definite.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let values = Self::validate(values)?;
        let is_positive_definite = linalg::is_positive_definite(&values);
        Ok(Self {
            values,
            is_positive_definite,
        })
    }

    fn validate(values: DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.nrows() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "covariance matrix must be square, got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !linalg::all_finite(&values) {
            return Err(Error::InvalidInput(
                "covariance matrix contains a non-finite entry".into(),
            ));
        }
        for i in 0..values.nrows() {
            if values[(i, i)] <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "covariance diagonal entry {i} is {} (must be > 0)",
                    values[(i, i)]
                )));
            }
        }
        Ok(linalg::symmetrize(&values))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_positive_definite(&self) -> bool {
        self.is_positive_definite
    }
}

/// An estimated precision (inverse covariance) matrix, tagged with the
/// estimator that produced it.
///
/// Every source except `nodewise` stores an exactly symmetric matrix
/// (asymmetries are averaged away at construction). The nodewise regression
/// estimator is kept raw and asymmetric on purpose, and [`Self::is_symmetric`]
/// reports `false` for it; downstream code must consult the flag before doing
/// anything that assumes symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    values: DMatrix<f64>,
    source: EstimatorTag,
    is_symmetric: bool,
}

impl PrecisionMatrix {
    /// Wraps an estimate. For all sources except [`EstimatorTag::Nodewise`]
    /// the matrix is symmetrized by averaging; for nodewise it is stored
    /// verbatim. The diagonal must be strictly positive and all entries
    /// finite.
    pub fn new(values: DMatrix<f64>, source: EstimatorTag) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "precision matrix must be square, got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !linalg::all_finite(&values) {
            return Err(Error::InvalidInput(
                "precision matrix contains a non-finite entry".into(),
            ));
        }
        for i in 0..values.nrows() {
            if values[(i, i)] <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "precision diagonal entry {i} is {} (must be > 0)",
                    values[(i, i)]
                )));
            }
        }
        let is_symmetric = source != EstimatorTag::Nodewise;
        let values = if is_symmetric {
            linalg::symmetrize(&values)
        } else {
            values
        };
        Ok(Self {
            values,
            source,
            is_symmetric,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn source(&self) -> EstimatorTag {
        self.source
    }

    /// `true` for every source except nodewise, whose raw estimate is
    /// asymmetric.
    pub fn is_symmetric(&self) -> bool {
        self.is_symmetric
    }
}

/// The partial-correlation decomposition of a symmetric precision matrix:
/// packed off-diagonal partial correlations `rho` (see [`pair_index`]) plus
/// the diagonal precisions `omega_diag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDecomposition {
    rho: Vec<f64>,
    omega_diag: Vec<f64>,
}

impl SpaceDecomposition {
    /// Validates lengths (`rho` packs `p * (p-1) / 2` pairs for
    /// `p = omega_diag.len()`), `|rho| <= 1` and `omega_diag > 0`, all finite.
    pub fn new(rho: Vec<f64>, omega_diag: Vec<f64>) -> Result<Self> {
        let p = omega_diag.len();
        if p < 2 {
            return Err(Error::InvalidInput(format!(
                "decomposition needs at least 2 assets, got {p}"
            )));
        }
        if rho.len() != pair_count(p) {
            return Err(Error::InvalidInput(format!(
                "expected {} packed partial correlations for p = {p}, got {}",
                pair_count(p),
                rho.len()
            )));
        }
        for (k, &r) in rho.iter().enumerate() {
            if !r.is_finite() || r.abs() > 1.0 {
                return Err(Error::InvalidInput(format!(
                    "partial correlation {k} is {r} (must be finite with |rho| <= 1)"
                )));
            }
        }
        for (i, &w) in omega_diag.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal precision {i} is {w} (must be finite and > 0)"
                )));
            }
        }
        Ok(Self { rho, omega_diag })
    }

    /// Number of assets `p`.
    pub fn dim(&self) -> usize {
        self.omega_diag.len()
    }

    /// Packed partial correlations in [`pair_index`] order.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Diagonal precisions.
    pub fn omega_diag(&self) -> &[f64] {
        &self.omega_diag
    }

    /// Partial correlation of the unordered pair `(i, j)`, `i != j`.
    pub fn rho_pair(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.rho[pair_index(self.dim(), a, b)]
    }

    /// Number of nonzero packed partial correlations.
    pub fn nonzero_count(&self) -> usize {
        self.rho.iter().filter(|r| **r != 0.0).count()
    }
}

/// A mean-return vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    values: DVector<f64>,
}

impl MeanVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("mean vector must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "mean vector contains a non-finite entry".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Reassembles a precision matrix from its partial-correlation decomposition:
/// `omega_ij = -rho_ij * sqrt(omega_ii * omega_jj)`, diagonal from
/// `omega_diag`. The result is exactly symmetric; `source` is the caller's
/// tag for the estimate.
pub fn precision_from_decomposition(
    d: &SpaceDecomposition,
    source: EstimatorTag,
) -> Result<PrecisionMatrix> {
    let p = d.dim();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        m[(i, i)] = d.omega_diag()[i];
    }
    for (i, j) in pairs(p) {
        let v = -d.rho()[pair_index(p, i, j)] * (d.omega_diag()[i] * d.omega_diag()[j]).sqrt();
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    PrecisionMatrix::new(m, source)
}

/// Extracts the partial-correlation decomposition
/// `rho_ij = -omega_ij / sqrt(omega_ii * omega_jj)` from a symmetric
/// precision matrix.
///
/// Errors when the input is flagged asymmetric (a nodewise estimate must not
/// be decomposed) or when some `|rho_ij| > 1`, which means the input was not
/// a valid precision matrix of any distribution.
pub fn decomposition_from_precision(m: &PrecisionMatrix) -> Result<SpaceDecomposition> {
    if !m.is_symmetric() {
        return Err(Error::NotSymmetric(format!(
            "cannot decompose an asymmetric {} precision estimate",
            m.source()
        )));
    }
    let p = m.dim();
    let values = m.values();
    let omega_diag: Vec<f64> = (0..p).map(|i| values[(i, i)]).collect();
    let mut rho = Vec::with_capacity(pair_count(p));
    for (i, j) in pairs(p) {
        rho.push(-values[(i, j)] / (omega_diag[i] * omega_diag[j]).sqrt());
    }
    SpaceDecomposition::new(rho, omega_diag)
}

/// The implied regression-coefficient matrix `beta` with zero diagonal and
/// `beta_ij = rho_ij * sqrt(omega_jj / omega_ii)`: row `i` holds the
/// coefficients for predicting asset `i` from the remaining assets.
pub fn regression_coefficients(d: &SpaceDecomposition) -> DMatrix<f64> {
    let p = d.dim();
    let mut beta = DMatrix::zeros(p, p);
    for (i, j) in pairs(p) {
        let r = d.rho()[pair_index(p, i, j)];
        if r != 0.0 {
            let wi = d.omega_diag()[i];
            let wj = d.omega_diag()[j];
            beta[(i, j)] = r * (wj / wi).sqrt();
            beta[(j, i)] = r * (wi / wj).sqrt();
        }
    }
    beta
}

/// Sample mean and sample covariance (denominator `n - 1`) of a returns
/// panel. The covariance is exactly symmetric by construction.
pub fn sample_moments(x: &ReturnsMatrix) -> Result<(MeanVector, CovarianceMatrix)> {
    let n = x.n_periods();
    let p = x.n_assets();
    let values = x.values();
    let mean = DVector::from_iterator(p, (0..p).map(|j| values.column(j).sum() / n as f64));
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut acc = 0.0;
            for t in 0..n {
                acc += (values[(t, i)] - mean[i]) * (values[(t, j)] - mean[j]);
            }
            let v = acc / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    for i in 0..p {
        if cov[(i, i)] <= 0.0 {
            return Err(Error::DegenerateColumn {
                label: x.asset_labels()[i].clone(),
            });
        }
    }
    Ok((MeanVector::new(mean)?, CovarianceMatrix::new(cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_panel() -> ReturnsMatrix {
        // 4 periods x 2 assets with easy hand-computed moments.
        let values = DMatrix::from_row_slice(
            4,
            2,
            &[
                0.01, 0.02, //
                0.03, -0.02, //
                -0.01, 0.00, //
                0.05, 0.04,
            ],
        );
        ReturnsMatrix::from_values(values).unwrap()
    }

    #[test]
    fn pair_index_is_lexicographic() {
        // p = 4: (0,1)(0,2)(0,3)(1,2)(1,3)(2,3)
        let order: Vec<(usize, usize)> = pairs(4).collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for (k, (i, j)) in order.iter().enumerate() {
            assert_eq!(pair_index(4, *i, *j), k);
        }
        assert_eq!(pair_count(4), 6);
    }

    #[test]
    fn returns_matrix_rejects_bad_panels() {
        let ok = DMatrix::from_element(3, 2, 0.01);
        assert!(ReturnsMatrix::from_values(ok.clone()).is_ok());
        // Too few periods.
        assert!(ReturnsMatrix::from_values(DMatrix::from_element(1, 2, 0.0)).is_err());
        // Non-finite entry.
        let mut bad = ok.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(ReturnsMatrix::from_values(bad).is_err());
        // Duplicate labels.
        assert!(ReturnsMatrix::new(
            ok.clone(),
            vec!["A".into(), "A".into()],
            vec!["1".into(), "2".into(), "3".into()],
        )
        .is_err());
        // Non-increasing period index.
        assert!(ReturnsMatrix::new(
            ok,
            vec!["A".into(), "B".into()],
            vec!["2".into(), "2".into(), "3".into()],
        )
        .is_err());
    }

    #[test]
    fn sample_moments_match_hand_computation() {
        let x = toy_panel();
        let (mu, cov) = sample_moments(&x).unwrap();
        assert_abs_diff_eq!(mu.values()[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(mu.values()[1], 0.01, epsilon = 1e-15);
        // Hand computation with denominator n - 1 = 3:
        // dev A = [-0.01, 0.01, -0.03, 0.03], dev B = [0.01, -0.03, -0.01, 0.03]
        // var A = (1 + 1 + 9 + 9) * 1e-4 / 3
        let var_a = 20e-4 / 3.0;
        let var_b = 20e-4 / 3.0;
        let cov_ab = (-0.01 * 0.01 + 0.01 * -0.03 + -0.03 * -0.01 + 0.03 * 0.03) / 3.0;
        assert_abs_diff_eq!(cov.values()[(0, 0)], var_a, epsilon = 1e-15);
        assert_abs_diff_eq!(cov.values()[(1, 1)], var_b, epsilon = 1e-15);
        assert_abs_diff_eq!(cov.values()[(0, 1)], cov_ab, epsilon = 1e-15);
    }

    #[test]
    fn decomposition_round_trip_identity_example() {
        // 2 x 2 precision with omega_12 = -0.3, unit diagonal: rho_12 = 0.3.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 1.0]);
        let prec = PrecisionMatrix::new(m, EstimatorTag::Exact).unwrap();
        let d = decomposition_from_precision(&prec).unwrap();
        assert_abs_diff_eq!(d.rho()[0], 0.3, epsilon = 1e-15);
        let back = precision_from_decomposition(&d, EstimatorTag::Exact).unwrap();
        assert_abs_diff_eq!(back.values()[(0, 1)], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(back.values()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nodewise_estimates_refuse_decomposition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.2, 1.0]);
        let prec = PrecisionMatrix::new(m, EstimatorTag::Nodewise).unwrap();
        assert!(!prec.is_symmetric());
        // Raw values preserved, not averaged.
        assert_eq!(prec.values()[(0, 1)], -0.3);
        assert_eq!(prec.values()[(1, 0)], -0.2);
        assert!(matches!(
            decomposition_from_precision(&prec),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn regression_coefficients_couple_through_omega() {
        // rho_12 = 0.5, omega = (4, 1): beta_12 = 0.5 * sqrt(1/4) = 0.25,
        // beta_21 = 0.5 * sqrt(4/1) = 1.0.
        let d = SpaceDecomposition::new(vec![0.5], vec![4.0, 1.0]).unwrap();
        let beta = regression_coefficients(&d);
        assert_abs_diff_eq!(beta[(0, 1)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(beta[(1, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(beta[(0, 0)], 0.0);
        // Sign coupling: beta_ij * beta_ji = rho^2 >= 0.
        assert!(beta[(0, 1)] * beta[(1, 0)] >= 0.0);
    }

    #[test]
    fn decomposition_validates_ranges() {
        assert!(SpaceDecomposition::new(vec![1.5], vec![1.0, 1.0]).is_err());
        assert!(SpaceDecomposition::new(vec![0.5], vec![1.0, -1.0]).is_err());
        assert!(SpaceDecomposition::new(vec![0.5, 0.1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn estimator_tag_round_trips() {
        for tag in [
            EstimatorTag::SpaceUnweighted,
            EstimatorTag::SpaceWeighted,
            EstimatorTag::Nodewise,
            EstimatorTag::LedoitWolf,
            EstimatorTag::Exact,
            EstimatorTag::Poet,
        ] {
            assert_eq!(EstimatorTag::parse(tag.as_str()).unwrap(), tag);
        }
        assert!(EstimatorTag::parse("glasso").is_err());
    }

    #[test]
    fn window_slices_rows_and_periods() {
        let x = toy_panel();
        let w = x.window(1, 3).unwrap();
        assert_eq!(w.n_periods(), 3);
        assert_eq!(w.values()[(0, 0)], 0.03);
        assert_eq!(w.period_index()[0], "t000002");
        assert!(x.window(2, 3).is_err());
    }
}

//! Monte-Carlo study harness: synthetic data generators with exact ground
//! truth, a seeded replication engine and a long-format results table.
//!
//! Two data-generating processes are provided:
//!
//! * **Toeplitz**: jointly Gaussian returns with covariance
//!   `sigma_ij = base^|i-j|`, whose inverse is exactly tridiagonal — a
//!   sparse ground truth the sparse estimators can in principle recover.
//! * **Sparse factor**: `x_t = mu + B_t f_t + eps_t` with fresh Gaussian
//!   loadings every period, Gaussian factors and unit Gaussian noise. The
//!   marginal covariance is `(1 + k * loading_variance * factor_variance) I`,
//!   so the truth is dense-free and the precision is a scaled identity.
//!
//! Replications are paired: every estimator in a study sees the same draw of
//! each replication. Child RNGs are derived by hashing
//! `"{seed}/{cell-label}/{replication}"`, so any single replication can be
//! regenerated in isolation and results do not depend on thread scheduling.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fit_ledoit_wolf, fit_nodewise, NodewiseConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{
    covariance_from_precision, risk_error, variance_error, weight_error, SimulationMetrics,
};
use crate::portfolio::{
    gmv_weights, markowitz_weights, PortfolioKind, PortfolioTarget, WeightVector,
};
use crate::space::{fit_space, SpaceConfig, WeightMode};
use crate::types::{
    sample_moments, CovarianceMatrix, EstimatorTag, MeanVector, PrecisionMatrix, ReturnsMatrix,
};

/// Per-period target for mean-constrained study cells: a 10% annual return
/// over 252 trading days, i.e. 0.0378% per day.
pub const DAILY_TARGET_RETURN: f64 = 0.000378;

/// Which synthetic process generates the returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    Toeplitz,
    SparseFactor,
}

impl DgpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DgpKind::Toeplitz => "toeplitz",
            DgpKind::SparseFactor => "sparse-factor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "toeplitz" => Ok(DgpKind::Toeplitz),
            "sparse-factor" => Ok(DgpKind::SparseFactor),
            other => Err(Error::InvalidInput(format!(
                "unknown DGP {other:?} (expected toeplitz or sparse-factor)"
            ))),
        }
    }
}

/// How the true mean vector is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// `mu = 0`; suitable for global-minimum-variance studies.
    Zero,
    /// `mu_i` iid `N(0, variance)`, drawn once per replication.
    Gaussian { variance: f64 },
}

/// One data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Periods per replication.
    pub n: usize,
    /// Assets.
    pub p: usize,
    pub mean: MeanMode,
    /// Toeplitz decay base (`sigma_ij = base^|i-j|`).
    pub toeplitz_base: f64,
    /// Number of factors in the sparse-factor process.
    pub factor_count: usize,
    /// Variance of each (per-period) factor loading.
    pub loading_variance: f64,
    /// Variance of each factor.
    pub factor_variance: f64,
}

impl DgpSpec {
    /// Toeplitz process with the standard decay of 0.15 and a zero mean.
    pub fn toeplitz(n: usize, p: usize) -> Self {
        Self {
            kind: DgpKind::Toeplitz,
            n,
            p,
            mean: MeanMode::Zero,
            toeplitz_base: 0.15,
            factor_count: 3,
            loading_variance: 0.01,
            factor_variance: 0.1,
        }
    }

    /// Sparse-factor process with 3 factors, loading variance 0.01, factor
    /// variance 0.1 and a zero mean.
    pub fn sparse_factor(n: usize, p: usize) -> Self {
        Self {
            kind: DgpKind::SparseFactor,
            ..Self::toeplitz(n, p)
        }
    }

    pub fn with_mean(mut self, mean: MeanMode) -> Self {
        self.mean = mean;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 {
            return Err(Error::Config(format!(
                "DGP must have n >= 2 and p >= 2, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if !(self.toeplitz_base.abs() < 1.0) {
            return Err(Error::Config(format!(
                "toeplitz_base must satisfy |base| < 1, got {}",
                self.toeplitz_base
            )));
        }
        if self.factor_count == 0 {
            return Err(Error::Config("factor_count must be >= 1".into()));
        }
        for (name, v) in [
            ("loading_variance", self.loading_variance),
            ("factor_variance", self.factor_variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let MeanMode::Gaussian { variance } = self.mean {
            if !(variance > 0.0) || !variance.is_finite() {
                return Err(Error::Config(format!(
                    "mean variance must be positive, got {variance}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical label identifying the process (but not the replication);
    /// part of the child-seed derivation.
    pub fn label(&self) -> String {
        let mean = match self.mean {
            MeanMode::Zero => "zero".to_owned(),
            MeanMode::Gaussian { variance } => format!("gaussian({variance})"),
        };
        match self.kind {
            DgpKind::Toeplitz => format!(
                "toeplitz/n={}/p={}/mean={}/base={}",
                self.n, self.p, mean, self.toeplitz_base
            ),
            DgpKind::SparseFactor => format!(
                "sparse-factor/n={}/p={}/mean={}/k={}/lv={}/fv={}",
                self.n,
                self.p,
                mean,
                self.factor_count,
                self.loading_variance,
                self.factor_variance
            ),
        }
    }
}

/// One replication's draw together with its exact ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub returns: ReturnsMatrix,
    pub true_mean: MeanVector,
    pub true_covariance: CovarianceMatrix,
    pub true_precision: PrecisionMatrix,
}

/// Deterministic child RNG for one `(seed, label, replication)` triple: the
/// ChaCha20 seed is `SHA-256("{seed}/{label}/{rep}")`.
pub fn replication_rng(seed: u64, label: &str, rep: usize) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(format!("{seed}/{label}/{rep}").as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

fn draw_mean(spec: &DgpSpec, rng: &mut ChaCha20Rng) -> DVector<f64> {
    match spec.mean {
        MeanMode::Zero => DVector::zeros(spec.p),
        MeanMode::Gaussian { variance } => {
            let sd = variance.sqrt();
            DVector::from_fn(spec.p, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
        }
    }
}

/// The exact tridiagonal inverse of the Toeplitz covariance
/// `sigma_ij = r^|i-j|`: scaled by `1 / (1 - r^2)`, the diagonal is
/// `(1, 1 + r^2, ..., 1 + r^2, 1)` and the first off-diagonal is `-r`.
pub fn toeplitz_precision(p: usize, r: f64) -> DMatrix<f64> {
    let scale = 1.0 / (1.0 - r * r);
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        m[(i, i)] = if i == 0 || i == p - 1 {
            scale
        } else {
            (1.0 + r * r) * scale
        };
        if i + 1 < p {
            m[(i, i + 1)] = -r * scale;
            m[(i + 1, i)] = -r * scale;
        }
    }
    m
}

/// Draws one replication from the process. The draw order is fixed (mean
/// first, then period by period) so results are reproducible from the
/// child seed alone.
pub fn generate(spec: &DgpSpec, rng: &mut ChaCha20Rng) -> Result<GeneratedData> {
    spec.validate()?;
    match spec.kind {
        DgpKind::Toeplitz => generate_toeplitz(spec, rng),
        DgpKind::SparseFactor => generate_sparse_factor(spec, rng),
    }
}

fn generate_toeplitz(spec: &DgpSpec, rng: &mut ChaCha20Rng) -> Result<GeneratedData> {
    let (n, p) = (spec.n, spec.p);
    let sigma = linalg::toeplitz_ar(p, spec.toeplitz_base);
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("Toeplitz covariance is not PD".into()))?;
    let l = chol.l();
    let mu = draw_mean(spec, rng);
    let mut values = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for t in 0..n {
        for i in 0..p {
            z[i] = StandardNormal.sample(rng);
        }
        let x = &mu + &l * &z;
        values.row_mut(t).tr_copy_from(&x);
    }
    Ok(GeneratedData {
        returns: ReturnsMatrix::from_values(values)?,
        true_mean: MeanVector::new(mu)?,
        true_covariance: CovarianceMatrix::new(sigma)?,
        true_precision: PrecisionMatrix::new(
            toeplitz_precision(p, spec.toeplitz_base),
            EstimatorTag::Exact,
        )?,
    })
}

fn generate_sparse_factor(spec: &DgpSpec, rng: &mut ChaCha20Rng) -> Result<GeneratedData> {
    let (n, p, k) = (spec.n, spec.p, spec.factor_count);
    let load_sd = spec.loading_variance.sqrt();
    let factor_sd = spec.factor_variance.sqrt();
    let mu = draw_mean(spec, rng);
    let mut values = DMatrix::zeros(n, p);
    let mut loadings = DMatrix::zeros(p, k);
    let mut factors = DVector::zeros(k);
    for t in 0..n {
        for i in 0..p {
            for j in 0..k {
                let z: f64 = StandardNormal.sample(rng);
                loadings[(i, j)] = load_sd * z;
            }
        }
        for j in 0..k {
            let z: f64 = StandardNormal.sample(rng);
            factors[j] = factor_sd * z;
        }
        let mut x = &mu + &loadings * &factors;
        for i in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            x[i] += z;
        }
        values.row_mut(t).tr_copy_from(&x);
    }
    // Marginally, Var(B_t f_t) = factor_variance * k * loading_variance * I
    // and the noise adds I, with zero cross-asset covariance.
    let total_var = 1.0 + k as f64 * spec.loading_variance * spec.factor_variance;
    let sigma = DMatrix::from_diagonal_element(p, p, total_var);
    let omega = DMatrix::from_diagonal_element(p, p, 1.0 / total_var);
    Ok(GeneratedData {
        returns: ReturnsMatrix::from_values(values)?,
        true_mean: MeanVector::new(mu)?,
        true_covariance: CovarianceMatrix::new(sigma)?,
        true_precision: PrecisionMatrix::new(omega, EstimatorTag::Exact)?,
    })
}

/// Where the mean vector fed to the mean-constrained solver comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkowitzMu {
    /// Sample mean of the replication's panel (the realistic choice).
    Sample,
    /// The true mean, isolating covariance-estimation error.
    True,
}

/// One table cell: a process plus the portfolio built on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub dgp: DgpSpec,
    pub portfolio: PortfolioKind,
    /// Target mean for mean-constrained cells, in per-period decimal units.
    pub target: Option<f64>,
}

/// Full study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub cells: Vec<StudyCell>,
    pub estimators: Vec<EstimatorTag>,
    pub replications: usize,
    pub seed: u64,
    pub markowitz_mu: MarkowitzMu,
    /// Shared settings for both sparse partial-correlation variants; the
    /// weight mode is forced per estimator tag.
    pub space: SpaceConfig,
    pub nodewise: NodewiseConfig,
}

impl StudyConfig {
    pub fn new(
        cells: Vec<StudyCell>,
        estimators: Vec<EstimatorTag>,
        replications: usize,
        seed: u64,
    ) -> Self {
        Self {
            cells,
            estimators,
            replications,
            seed,
            markowitz_mu: MarkowitzMu::Sample,
            space: SpaceConfig::default(),
            nodewise: NodewiseConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("study has no cells".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("study has no estimators".into()));
        }
        if self.estimators.contains(&EstimatorTag::Poet) {
            return Err(Error::Config(
                "poet is a merge-only tag: import its rows with merge_rows instead".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::Config("need at least 1 replication".into()));
        }
        for cell in &self.cells {
            cell.dgp.validate()?;
            match cell.portfolio {
                PortfolioKind::Gmv => {}
                PortfolioKind::Markowitz => {
                    let t = cell.target.ok_or_else(|| {
                        Error::Config("markowitz cells need a target mean".into())
                    })?;
                    if !t.is_finite() {
                        return Err(Error::Config(format!("target mean {t} is not finite")));
                    }
                    if matches!(cell.dgp.mean, MeanMode::Zero) {
                        return Err(Error::Config(
                            "markowitz cells need a non-degenerate mean; use a gaussian mean mode"
                                .into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Names of the three simulation metrics, in fixed table order.
pub const METRIC_NAMES: [&str; 3] = ["variance-error", "weight-error", "risk-error"];

/// One aggregated table row: a `(cell, estimator, metric)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub dgp: String,
    pub n: usize,
    pub p: usize,
    pub portfolio: String,
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub replications: usize,
    /// Replications whose metric was non-finite or whose fit failed; they
    /// are excluded from the mean.
    pub exclusions: usize,
}

/// Non-fatal events aggregated per `(cell, estimator)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub dgp: String,
    pub n: usize,
    pub p: usize,
    pub portfolio: String,
    pub estimator: String,
    /// Replications where coordinate descent hit its sweep cap.
    pub convergence_failures: usize,
    /// Replications whose implied covariance needed the eigenvalue-floor
    /// repair.
    pub repairs: usize,
    /// Replications where the fit or solve failed outright.
    pub failures: usize,
}

/// Aggregated study results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    rows: Vec<StudyRow>,
    diagnostics: Vec<CellDiagnostics>,
}

impl StudyTable {
    pub fn rows(&self) -> &[StudyRow] {
        &self.rows
    }

    pub fn diagnostics(&self) -> &[CellDiagnostics] {
        &self.diagnostics
    }

    /// Looks up one aggregated value.
    pub fn find(
        &self,
        dgp: &str,
        n: usize,
        p: usize,
        portfolio: &str,
        estimator: &str,
        metric: &str,
    ) -> Option<&StudyRow> {
        self.rows.iter().find(|r| {
            r.dgp == dgp
                && r.n == n
                && r.p == p
                && r.portfolio == portfolio
                && r.estimator == estimator
                && r.metric == metric
        })
    }

    /// Appends externally computed rows (e.g. an estimator run in another
    /// system) after validating tags, metric names and basic sanity.
    pub fn merge_rows(&mut self, rows: Vec<StudyRow>) -> Result<()> {
        for row in &rows {
            EstimatorTag::parse(&row.estimator)?;
            DgpKind::parse(&row.dgp)?;
            PortfolioKind::parse(&row.portfolio)?;
            if !METRIC_NAMES.contains(&row.metric.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "unknown metric {:?} (expected one of {METRIC_NAMES:?})",
                    row.metric
                )));
            }
            if !row.mean.is_finite() || !(row.stderr >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "row for {}/{} has non-finite statistics",
                    row.estimator, row.metric
                )));
            }
            if row.exclusions > row.replications {
                return Err(Error::InvalidInput(
                    "exclusions cannot exceed replications".into(),
                ));
            }
        }
        self.rows.extend(rows);
        Ok(())
    }

    /// Writes the long-format CSV:
    /// `dgp,n,p,portfolio,estimator,metric,mean,stderr,replications,exclusions`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "dgp",
            "n",
            "p",
            "portfolio",
            "estimator",
            "metric",
            "mean",
            "stderr",
            "replications",
            "exclusions",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.dgp.clone(),
                r.n.to_string(),
                r.p.to_string(),
                r.portfolio.clone(),
                r.estimator.clone(),
                r.metric.clone(),
                format!("{:.10e}", r.mean),
                format!("{:.10e}", r.stderr),
                r.replications.to_string(),
                r.exclusions.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON mirror of the table, including per-cell diagnostics.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-replication outcome for one estimator.
struct ReplicationOutcome {
    metrics: Option<SimulationMetrics>,
    converged: bool,
    repaired: bool,
    failed: bool,
}

/// Fits one estimator on one replication and evaluates it against the truth.
fn evaluate_estimator(
    tag: EstimatorTag,
    data: &GeneratedData,
    cell: &StudyCell,
    cfg: &StudyConfig,
    w_true: &WeightVector,
) -> ReplicationOutcome {
    let failed = |_: Error| ReplicationOutcome {
        metrics: None,
        converged: true,
        repaired: false,
        failed: true,
    };
    // Estimate the precision (and, where the estimator provides one
    // natively, the covariance).
    let estimate: std::result::Result<(PrecisionMatrix, Option<CovarianceMatrix>, bool), Error> =
        match tag {
            EstimatorTag::SpaceUnweighted | EstimatorTag::SpaceWeighted => {
                let mut space_cfg = cfg.space.clone();
                space_cfg.weight_mode = if tag == EstimatorTag::SpaceUnweighted {
                    WeightMode::Uniform
                } else {
                    WeightMode::Precision
                };
                fit_space(&data.returns, &space_cfg).and_then(|fit| {
                    let prec =
                        crate::types::precision_from_decomposition(fit.decomposition(), tag)?;
                    Ok((prec, None, fit.converged()))
                })
            }
            EstimatorTag::Nodewise => fit_nodewise(&data.returns, &cfg.nodewise)
                .map(|fit| (fit.precision().clone(), None, fit.converged())),
            EstimatorTag::LedoitWolf => fit_ledoit_wolf(&data.returns).map(|fit| {
                (
                    fit.precision().clone(),
                    Some(fit.covariance().clone()),
                    true,
                )
            }),
            EstimatorTag::Exact => Ok((
                data.true_precision.clone(),
                Some(data.true_covariance.clone()),
                true,
            )),
            EstimatorTag::Poet => Err(Error::Config("poet cannot be fitted".into())),
        };
    let (precision, native_cov, converged) = match estimate {
        Ok(v) => v,
        Err(e) => return failed(e),
    };

    // Implied covariance for the variance/risk errors.
    let (sigma_hat, repaired) = match native_cov {
        Some(c) => (c, false),
        None => match covariance_from_precision(&precision) {
            Ok(v) => v,
            Err(e) => return failed(e),
        },
    };

    // Portfolio weights from the estimate.
    let w_hat = match cell.portfolio {
        PortfolioKind::Gmv => gmv_weights(&precision).map(|(w, _)| w),
        PortfolioKind::Markowitz => {
            let target = PortfolioTarget::new(cell.target.expect("validated")).expect("finite");
            let mu = match cfg.markowitz_mu {
                MarkowitzMu::True => Ok(data.true_mean.clone()),
                MarkowitzMu::Sample => sample_moments(&data.returns).map(|(m, _)| m),
            };
            mu.and_then(|mu| markowitz_weights(&precision, &mu, target, None).map(|(w, _)| w))
        }
    };
    let w_hat = match w_hat {
        Ok(w) => w,
        Err(e) => return failed(e),
    };

    let metrics = (|| -> Result<SimulationMetrics> {
        Ok(SimulationMetrics {
            weight_error: weight_error(&w_hat, w_true)?,
            variance_error: variance_error(&w_hat, &sigma_hat, w_true, &data.true_covariance)?,
            risk_error: risk_error(&w_hat, &sigma_hat, &data.true_covariance)?,
        })
    })();
    match metrics {
        Ok(m) => ReplicationOutcome {
            metrics: Some(m),
            converged,
            repaired,
            failed: false,
        },
        Err(e) => failed(e),
    }
}

/// True weights of a cell's portfolio from the exact moments.
fn true_weights(
    data: &GeneratedData,
    cell: &StudyCell,
    _cfg: &StudyConfig,
) -> Result<WeightVector> {
    match cell.portfolio {
        PortfolioKind::Gmv => gmv_weights(&data.true_precision).map(|(w, _)| w),
        PortfolioKind::Markowitz => {
            let target = PortfolioTarget::new(cell.target.expect("validated"))?;
            markowitz_weights(
                &data.true_precision,
                &data.true_mean,
                target,
                Some(&data.true_covariance),
            )
            .map(|(w, _)| w)
        }
    }
}

/// Runs the full study: every `(cell, replication)` draw is generated once
/// and shared across estimators, replications run in parallel, and the
/// aggregation (mean and standard error over finite values) is independent
/// of thread scheduling.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for cell in &cfg.cells {
        let label = cell.dgp.label();
        // One entry per replication, in replication order: Vec<(estimator outcomes)>.
        let outcomes: Vec<Result<Vec<ReplicationOutcome>>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(cfg.seed, &label, rep);
                let data = generate(&cell.dgp, &mut rng)?;
                let w_true = true_weights(&data, cell, cfg)?;
                Ok(cfg
                    .estimators
                    .iter()
                    .map(|&tag| evaluate_estimator(tag, &data, cell, cfg, &w_true))
                    .collect())
            })
            .collect();
        // A failure to generate data or price the truth poisons the cell;
        // estimator-level failures are mere exclusions.
        let outcomes: Vec<Vec<ReplicationOutcome>> = outcomes.into_iter().collect::<Result<_>>()?;

        for (e_idx, &tag) in cfg.estimators.iter().enumerate() {
            let per_rep: Vec<&ReplicationOutcome> =
                outcomes.iter().map(|reps| &reps[e_idx]).collect();
            let convergence_failures = per_rep.iter().filter(|o| !o.converged).count();
            let repairs = per_rep.iter().filter(|o| o.repaired).count();
            let failures = per_rep.iter().filter(|o| o.failed).count();
            diagnostics.push(CellDiagnostics {
                dgp: cell.dgp.kind.as_str().to_owned(),
                n: cell.dgp.n,
                p: cell.dgp.p,
                portfolio: cell.portfolio.as_str().to_owned(),
                estimator: tag.as_str().to_owned(),
                convergence_failures,
                repairs,
                failures,
            });
            for (m_idx, metric) in METRIC_NAMES.iter().enumerate() {
                let values: Vec<f64> = per_rep
                    .iter()
                    .filter_map(|o| o.metrics.as_ref())
                    .map(|m| match m_idx {
                        0 => m.variance_error,
                        1 => m.weight_error,
                        _ => m.risk_error,
                    })
                    .filter(|v| v.is_finite())
                    .collect();
                let (mean, stderr) = mean_and_stderr(&values);
                rows.push(StudyRow {
                    dgp: cell.dgp.kind.as_str().to_owned(),
                    n: cell.dgp.n,
                    p: cell.dgp.p,
                    portfolio: cell.portfolio.as_str().to_owned(),
                    estimator: tag.as_str().to_owned(),
                    metric: (*metric).to_owned(),
                    mean,
                    stderr,
                    replications: cfg.replications,
                    exclusions: cfg.replications - values.len(),
                });
            }
        }
    }
    Ok(StudyTable { rows, diagnostics })
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

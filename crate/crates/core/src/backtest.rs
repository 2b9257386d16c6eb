//! Rolling out-of-sample backtest with proportional transaction costs.
//!
//! With `n` periods of data and a training window of `n_t` periods, the
//! engine refits the chosen estimator on every window `[k, k + n_t)` for
//! `k = 0 .. n - n_t`, builds portfolio weights from each fit, and realizes
//! them on period `k + n_t`. Holdings drift with returns between rebalances
//! (buy-and-hold): after a period with returns `x`, weight `w_j` becomes
//! `w_j (1 + x_j) / (1 + w' x)`.
//!
//! Cost accounting charges each test period for the trade that established
//! its position: period `k`'s net return is
//!
//! ```text
//! net_k = gross_k - cost_rate * (1 + gross_k) * || w_k - w_k^drift ||_1
//! ```
//!
//! where `w_k` are the holdings over period `k` and `w_k^drift` are the
//! previous holdings drifted through period `k - 1`. The first window's
//! position is treated as pre-existing (no initial charge) unless
//! [`BacktestConfig::charge_initial_trade`] is set, in which case the full
//! initial allocation from cash is charged. Skipped rebalances (see
//! [`BacktestConfig::rebalance_every`]) keep the drifted holdings and incur
//! no cost.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_ledoit_wolf, fit_nodewise, NodewiseConfig};
use crate::error::{Error, Result};
use crate::metrics::{net_return, oos_performance, turnover, PerformanceReport};
use crate::portfolio::{
    gmv_weights, markowitz_weights, PortfolioKind, PortfolioTarget, WeightVector,
};
use crate::space::{fit_space, SpaceConfig, WeightMode};
use crate::types::{
    precision_from_decomposition, sample_moments, EstimatorTag, PrecisionMatrix, ReturnsMatrix,
};

/// Default proportional cost rate: 50 basis points per unit of one-way
/// turnover.
pub const DEFAULT_COST_RATE: f64 = 0.005;

/// Default per-period target for mean-constrained backtests: 0.7974% per
/// rebalancing period.
pub const DEFAULT_TARGET_RETURN: f64 = 0.007974;

/// Which estimator the backtest refits on each window.
#[derive(Debug, Clone)]
pub enum EstimatorChoice {
    SpaceUnweighted(SpaceConfig),
    SpaceWeighted(SpaceConfig),
    Nodewise(NodewiseConfig),
    LedoitWolf,
    /// A fixed, externally supplied precision used for every window;
    /// isolates the portfolio rule from estimation error.
    Exact(PrecisionMatrix),
}

impl EstimatorChoice {
    pub fn tag(&self) -> EstimatorTag {
        match self {
            EstimatorChoice::SpaceUnweighted(_) => EstimatorTag::SpaceUnweighted,
            EstimatorChoice::SpaceWeighted(_) => EstimatorTag::SpaceWeighted,
            EstimatorChoice::Nodewise(_) => EstimatorTag::Nodewise,
            EstimatorChoice::LedoitWolf => EstimatorTag::LedoitWolf,
            EstimatorChoice::Exact(_) => EstimatorTag::Exact,
        }
    }
}

/// Backtest configuration.
#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// Training window length `n_t`.
    pub train_length: usize,
    pub estimator: EstimatorChoice,
    pub portfolio: PortfolioKind,
    /// Target mean for mean-constrained portfolios.
    pub target: Option<PortfolioTarget>,
    /// Proportional cost rate as a decimal (`0.005` = 50 basis points).
    pub cost_rate: f64,
    /// Rebalance every this many test periods (1 = every period); in
    /// between, holdings drift.
    pub rebalance_every: usize,
    /// Charge the initial allocation from cash in the first period.
    pub charge_initial_trade: bool,
}

impl BacktestConfig {
    pub fn new(train_length: usize, estimator: EstimatorChoice, portfolio: PortfolioKind) -> Self {
        Self {
            train_length,
            estimator,
            portfolio,
            target: None,
            cost_rate: DEFAULT_COST_RATE,
            rebalance_every: 1,
            charge_initial_trade: false,
        }
    }

    fn validate(&self, x: &ReturnsMatrix) -> Result<()> {
        if self.train_length < 2 {
            return Err(Error::Config(format!(
                "train_length must be >= 2, got {}",
                self.train_length
            )));
        }
        if x.n_periods() < self.train_length + 2 {
            return Err(Error::Config(format!(
                "need at least train_length + 2 = {} periods, got {}",
                self.train_length + 2,
                x.n_periods()
            )));
        }
        if !(0.0..1.0).contains(&self.cost_rate) {
            return Err(Error::Config(format!(
                "cost rate must be in [0, 1), got {}",
                self.cost_rate
            )));
        }
        if self.rebalance_every == 0 {
            return Err(Error::Config("rebalance_every must be >= 1".into()));
        }
        if self.portfolio == PortfolioKind::Markowitz && self.target.is_none() {
            return Err(Error::Config(
                "markowitz backtests need a target mean".into(),
            ));
        }
        if let EstimatorChoice::Exact(prec) = &self.estimator {
            if prec.dim() != x.n_assets() {
                return Err(Error::Config(format!(
                    "supplied precision is {} x {} but the panel has {} assets",
                    prec.dim(),
                    prec.dim(),
                    x.n_assets()
                )));
            }
        }
        Ok(())
    }
}

/// One realized test period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    /// Date of the realized return.
    pub date: String,
    pub gross: f64,
    pub net: f64,
    /// L1 distance traded at the start of this period.
    pub turnover: f64,
}

/// Diagnostics from one window's refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitDiagnostic {
    /// Window index, 0-based.
    pub window: usize,
    /// Date of the last training observation.
    pub fit_date: String,
    /// Whether iterative estimators exited on tolerance (`None` for
    /// closed-form estimators).
    pub converged: Option<bool>,
    /// Penalty used, when the estimator has one (mean across nodes for the
    /// nodewise estimator).
    pub lambda_used: Option<f64>,
    /// Nonzero off-diagonal count of the fitted estimate, when sparse.
    pub nonzero_count: Option<usize>,
    /// Whether the mean-constrained solve was degenerate on this window and
    /// fell back to global minimum variance.
    pub markowitz_fallback: bool,
}

/// Full backtest output.
#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub estimator: String,
    pub portfolio: String,
    pub train_length: usize,
    pub cost_rate: f64,
    pub rebalance_every: usize,
    pub charge_initial_trade: bool,
    pub periods: Vec<PeriodRecord>,
    /// Performance of the gross return series.
    pub no_cost: PerformanceReport,
    /// Performance of the net return series, with mean turnover attached.
    pub with_cost: PerformanceReport,
    /// Mean L1 rebalancing distance per test period.
    pub turnover: f64,
    pub refits: Vec<RefitDiagnostic>,
}

/// Buy-and-hold drift: after a period with returns `x_next`, weights become
/// `w_j (1 + x_j) / (1 + w' x)`. Errors when the portfolio value is wiped
/// out (`1 + w' x <= 0`). Preserves the budget: the drifted weights sum to 1
/// whenever the input weights do.
pub fn drift_weights(w: &WeightVector, x_next: &[f64]) -> Result<Vec<f64>> {
    if x_next.len() != w.dim() {
        return Err(Error::InvalidInput(format!(
            "returns have {} entries but weights have {}",
            x_next.len(),
            w.dim()
        )));
    }
    let growth: f64 = 1.0
        + w.values()
            .iter()
            .zip(x_next)
            .map(|(wi, xi)| wi * xi)
            .sum::<f64>();
    if !(growth > 0.0) {
        return Err(Error::Degenerate(format!(
            "portfolio value factor {growth} is not positive; cannot drift weights"
        )));
    }
    Ok(w.values()
        .iter()
        .zip(x_next)
        .map(|(wi, xi)| wi * (1.0 + xi) / growth)
        .collect())
}

/// Precision estimate plus diagnostics for one training window.
struct WindowFit {
    precision: PrecisionMatrix,
    converged: Option<bool>,
    lambda_used: Option<f64>,
    nonzero_count: Option<usize>,
}

fn fit_window(window: &ReturnsMatrix, estimator: &EstimatorChoice) -> Result<WindowFit> {
    match estimator {
        EstimatorChoice::SpaceUnweighted(cfg) | EstimatorChoice::SpaceWeighted(cfg) => {
            let mut cfg = cfg.clone();
            cfg.weight_mode = match estimator {
                EstimatorChoice::SpaceUnweighted(_) => WeightMode::Uniform,
                _ => WeightMode::Precision,
            };
            let fit = fit_space(window, &cfg)?;
            let tag = match cfg.weight_mode {
                WeightMode::Uniform => EstimatorTag::SpaceUnweighted,
                WeightMode::Precision => EstimatorTag::SpaceWeighted,
            };
            Ok(WindowFit {
                precision: precision_from_decomposition(fit.decomposition(), tag)?,
                converged: Some(fit.converged()),
                lambda_used: Some(fit.lambda_used()),
                nonzero_count: Some(fit.nonzero_count()),
            })
        }
        EstimatorChoice::Nodewise(cfg) => {
            let fit = fit_nodewise(window, cfg)?;
            let mean_lambda =
                fit.lambda_per_node().iter().sum::<f64>() / fit.lambda_per_node().len() as f64;
            let nonzero = fit.nonzero_count();
            Ok(WindowFit {
                converged: Some(fit.converged()),
                lambda_used: Some(mean_lambda),
                nonzero_count: Some(nonzero),
                precision: fit.into_precision(),
            })
        }
        EstimatorChoice::LedoitWolf => {
            let fit = fit_ledoit_wolf(window)?;
            Ok(WindowFit {
                precision: fit.precision().clone(),
                converged: None,
                lambda_used: Some(fit.shrinkage()),
                nonzero_count: None,
            })
        }
        EstimatorChoice::Exact(prec) => Ok(WindowFit {
            precision: prec.clone(),
            converged: None,
            lambda_used: None,
            nonzero_count: None,
        }),
    }
}

/// Weights for one window, falling back to global minimum variance when the
/// mean-constrained system is degenerate.
fn window_weights(
    window: &ReturnsMatrix,
    fit: &WindowFit,
    cfg: &BacktestConfig,
) -> Result<(WeightVector, bool)> {
    match cfg.portfolio {
        PortfolioKind::Gmv => gmv_weights(&fit.precision).map(|(w, _)| (w, false)),
        PortfolioKind::Markowitz => {
            let target = cfg.target.expect("validated");
            let (mu, _) = sample_moments(window)?;
            match markowitz_weights(&fit.precision, &mu, target, None) {
                Ok((w, _)) => Ok((w, false)),
                Err(Error::Degenerate(_)) => gmv_weights(&fit.precision).map(|(w, _)| (w, true)),
                Err(e) => Err(e),
            }
        }
    }
}

/// Runs the rolling backtest. Window refits are independent and run in
/// parallel; the realized path is then accumulated in period order.
pub fn run_backtest(x: &ReturnsMatrix, cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate(x)?;
    let n = x.n_periods();
    let n_t = cfg.train_length;
    let m = n - n_t;

    // Refit every window up front (parallel, order-stable).
    let fits: Vec<Result<(WeightVector, RefitDiagnostic)>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let window = x.window(k, n_t)?;
            let fit = fit_window(&window, &cfg.estimator).map_err(|e| Error::Window {
                window: k,
                source: Box::new(e),
            })?;
            let (weights, fallback) =
                window_weights(&window, &fit, cfg).map_err(|e| Error::Window {
                    window: k,
                    source: Box::new(e),
                })?;
            let diag = RefitDiagnostic {
                window: k,
                fit_date: x.period_index()[k + n_t - 1].clone(),
                converged: fit.converged,
                lambda_used: fit.lambda_used,
                nonzero_count: fit.nonzero_count,
                markowitz_fallback: fallback,
            };
            Ok((weights, diag))
        })
        .collect();
    let mut weights_per_window = Vec::with_capacity(m);
    let mut refits = Vec::with_capacity(m);
    for fit in fits {
        let (w, d) = fit?;
        weights_per_window.push(w);
        refits.push(d);
    }

    // Realize the path: holdings, drift, trades.
    let p = x.n_assets();
    let mut periods = Vec::with_capacity(m);
    let mut gross_series = Vec::with_capacity(m);
    let mut net_series = Vec::with_capacity(m);
    let mut trade_pairs = Vec::with_capacity(m);
    let mut held: WeightVector = weights_per_window[0].clone();
    let mut pre_trade: Vec<f64> = if cfg.charge_initial_trade {
        vec![0.0; p]
    } else {
        held.values().iter().cloned().collect()
    };
    for (k, refit_w) in weights_per_window.iter().enumerate() {
        if k > 0 {
            held = if k % cfg.rebalance_every == 0 {
                refit_w.clone()
            } else {
                // Keep the drifted holdings; the refit is recorded but not
                // adopted.
                WeightVector::new(DVector::from_vec(pre_trade.clone()), held.kind())?
            };
        }
        let row = x.period_row(k + n_t);
        let returns: Vec<f64> = row.iter().cloned().collect();
        let net = net_return(&held, &returns, &held, &pre_trade, cfg.cost_rate).map_err(|e| {
            Error::Window {
                window: k,
                source: Box::new(e),
            }
        })?;
        let gross: f64 = held.values().iter().zip(&returns).map(|(w, r)| w * r).sum();
        let traded: f64 = held
            .values()
            .iter()
            .zip(&pre_trade)
            .map(|(w, d)| (w - d).abs())
            .sum();
        periods.push(PeriodRecord {
            date: x.period_index()[k + n_t].clone(),
            gross,
            net,
            turnover: traded,
        });
        gross_series.push(gross);
        net_series.push(net);
        trade_pairs.push((held.values().iter().cloned().collect(), pre_trade.clone()));
        if k + 1 < m {
            pre_trade = drift_weights(&held, &returns).map_err(|e| Error::Window {
                window: k,
                source: Box::new(e),
            })?;
        }
    }

    let no_cost = oos_performance(&gross_series)?;
    let mean_turnover = turnover(&trade_pairs)?;
    let mut with_cost = oos_performance(&net_series)?;
    with_cost.with_cost = true;
    with_cost.cost_rate = cfg.cost_rate;
    with_cost.turnover = Some(mean_turnover);

    Ok(BacktestReport {
        estimator: cfg.estimator.tag().as_str().to_owned(),
        portfolio: cfg.portfolio.as_str().to_owned(),
        train_length: n_t,
        cost_rate: cfg.cost_rate,
        rebalance_every: cfg.rebalance_every,
        charge_initial_trade: cfg.charge_initial_trade,
        periods,
        no_cost,
        with_cost,
        turnover: mean_turnover,
        refits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, replication_rng, DgpSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn synthetic_panel(n: usize, p: usize, seed: u64) -> ReturnsMatrix {
        let spec = DgpSpec::toeplitz(n, p);
        let mut rng = replication_rng(seed, &spec.label(), 0);
        let mut data = generate(&spec, &mut rng).unwrap().returns;
        // Scale to return-like magnitudes so drift factors stay positive.
        let values = data.values().clone() * 0.01;
        data = ReturnsMatrix::from_values(values).unwrap();
        data
    }

    fn lw_gmv_config(n_t: usize) -> BacktestConfig {
        BacktestConfig::new(n_t, EstimatorChoice::LedoitWolf, PortfolioKind::Gmv)
    }

    #[test]
    fn drift_weights_track_relative_growth() {
        let w = WeightVector::new(DVector::from_vec(vec![0.5, 0.5]), PortfolioKind::Gmv).unwrap();
        // Asset 1 doubles, asset 2 flat: value factor 1.5.
        let d = drift_weights(&w, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(d[0], 1.0 / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.5 / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        // Total wipeout is an error.
        assert!(drift_weights(&w, &[-1.0, -1.0]).is_err());
    }

    #[test]
    fn window_count_and_dates_line_up() {
        let x = synthetic_panel(30, 4, 1);
        let report = run_backtest(&x, &lw_gmv_config(20)).unwrap();
        assert_eq!(report.periods.len(), 10);
        assert_eq!(report.refits.len(), 10);
        // First realized period is the one right after the first window.
        assert_eq!(report.periods[0].date, x.period_index()[20]);
        assert_eq!(report.refits[0].fit_date, x.period_index()[19]);
        assert_eq!(report.periods[9].date, x.period_index()[29]);
    }

    #[test]
    fn first_period_is_free_unless_initial_trade_is_charged() {
        let x = synthetic_panel(28, 4, 2);
        let free = run_backtest(&x, &lw_gmv_config(24)).unwrap();
        assert_eq!(free.periods[0].turnover, 0.0);
        assert_abs_diff_eq!(free.periods[0].gross, free.periods[0].net, epsilon = 1e-15);

        let mut cfg = lw_gmv_config(24);
        cfg.charge_initial_trade = true;
        let charged = run_backtest(&x, &cfg).unwrap();
        // Initial allocation from cash trades the full L1 norm of the
        // weights.
        assert!(charged.periods[0].turnover > 0.99);
        assert!(charged.periods[0].net < charged.periods[0].gross);
        // Later periods are identical under both conventions.
        assert_abs_diff_eq!(charged.periods[3].net, free.periods[3].net, epsilon = 1e-15);
    }

    #[test]
    fn zero_cost_makes_net_equal_gross() {
        let x = synthetic_panel(30, 4, 3);
        let mut cfg = lw_gmv_config(24);
        cfg.cost_rate = 0.0;
        let report = run_backtest(&x, &cfg).unwrap();
        for rec in &report.periods {
            assert_abs_diff_eq!(rec.gross, rec.net, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            report.no_cost.mean_return,
            report.with_cost.mean_return,
            epsilon = 1e-15
        );
        // Turnover is still measured even at zero cost.
        assert!(report.turnover > 0.0);
    }

    #[test]
    fn net_return_identity_holds_per_period() {
        let x = synthetic_panel(32, 5, 4);
        let mut cfg = lw_gmv_config(24);
        cfg.cost_rate = 0.007;
        let report = run_backtest(&x, &cfg).unwrap();
        for rec in &report.periods {
            assert_abs_diff_eq!(
                rec.net,
                rec.gross - 0.007 * (1.0 + rec.gross) * rec.turnover,
                epsilon = 1e-12
            );
        }
        // Mean per-period turnover matches the aggregate.
        let mean_t =
            report.periods.iter().map(|r| r.turnover).sum::<f64>() / report.periods.len() as f64;
        assert_abs_diff_eq!(report.turnover, mean_t, epsilon = 1e-12);
        assert_eq!(report.with_cost.turnover, Some(report.turnover));
        assert!(report.with_cost.with_cost);
        assert_eq!(report.with_cost.cost_rate, 0.007);
        assert!(!report.no_cost.with_cost);
    }

    #[test]
    fn sparse_rebalancing_drifts_between_refits() {
        let x = synthetic_panel(30, 4, 5);
        let mut cfg = lw_gmv_config(24);
        cfg.rebalance_every = 3;
        let report = run_backtest(&x, &cfg).unwrap();
        // Periods 1 and 2 hold drifted weights: no trade, no cost.
        assert_eq!(report.periods[1].turnover, 0.0);
        assert_eq!(report.periods[2].turnover, 0.0);
        // Period 3 rebalances.
        assert!(report.periods[3].turnover > 0.0);
    }

    #[test]
    fn exact_estimator_uses_injected_precision() {
        let x = synthetic_panel(26, 3, 6);
        let prec = PrecisionMatrix::new(DMatrix::identity(3, 3), EstimatorTag::Exact).unwrap();
        let cfg = BacktestConfig::new(20, EstimatorChoice::Exact(prec), PortfolioKind::Gmv);
        let report = run_backtest(&x, &cfg).unwrap();
        // Identity precision gives equal weights every window: after the
        // first period trades only rebalance drift away.
        for rec in &report.periods {
            assert!(rec.turnover < 0.1);
        }
        assert_eq!(report.estimator, "exact");
        // No iterative diagnostics for a fixed precision.
        assert_eq!(report.refits[0].converged, None);
        assert_eq!(report.refits[0].lambda_used, None);
    }

    #[test]
    fn markowitz_backtest_with_fallback_flag() {
        let x = synthetic_panel(30, 4, 7);
        let mut cfg = lw_gmv_config(24);
        cfg.portfolio = PortfolioKind::Markowitz;
        cfg.target = Some(PortfolioTarget::new(0.0005).unwrap());
        let report = run_backtest(&x, &cfg).unwrap();
        assert_eq!(report.portfolio, "markowitz");
        // Sample means of random data are almost surely non-degenerate.
        assert!(report.refits.iter().all(|r| !r.markowitz_fallback));
    }

    #[test]
    fn config_validation_rejects_misuse() {
        let x = synthetic_panel(20, 3, 8);
        // Too little data after the window.
        let cfg = lw_gmv_config(19);
        assert!(run_backtest(&x, &cfg).is_err());
        // Markowitz without target.
        let mut cfg = lw_gmv_config(15);
        cfg.portfolio = PortfolioKind::Markowitz;
        assert!(run_backtest(&x, &cfg).is_err());
        // Bad cost.
        let mut cfg = lw_gmv_config(15);
        cfg.cost_rate = 1.0;
        assert!(run_backtest(&x, &cfg).is_err());
        // Mismatched injected precision.
        let prec = PrecisionMatrix::new(DMatrix::identity(4, 4), EstimatorTag::Exact).unwrap();
        let cfg = BacktestConfig::new(15, EstimatorChoice::Exact(prec), PortfolioKind::Gmv);
        assert!(run_backtest(&x, &cfg).is_err());
    }

    #[test]
    fn backtest_is_deterministic() {
        let x = synthetic_panel(30, 4, 9);
        let cfg = BacktestConfig::new(
            24,
            EstimatorChoice::SpaceUnweighted(SpaceConfig::default()),
            PortfolioKind::Gmv,
        );
        let a = run_backtest(&x, &cfg).unwrap();
        let b = run_backtest(&x, &cfg).unwrap();
        assert_eq!(a.periods, b.periods);
        assert_eq!(a.refits, b.refits);
    }
}

//! `spaceport backtest`: rolling-window out-of-sample evaluation of one or
//! more estimators on a returns CSV, with proportional transaction costs.
//! Writes a per-period series and a full report per estimator plus a
//! combined summary table.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use spaceport::backtest::{
    run_backtest, BacktestConfig, BacktestReport, EstimatorChoice, DEFAULT_TARGET_RETURN,
};
use spaceport::baselines::NodewiseConfig;
use spaceport::io::{read_rate_csv, read_returns_csv, subtract_rate};
use spaceport::portfolio::{PortfolioKind, PortfolioTarget};
use spaceport::space::SpaceConfig;
use spaceport::types::EstimatorTag;

use crate::kv::{split_list, KvConfig};
use crate::manifest::{ensure_out_dir, RunManifest};

/// Default proportional cost in basis points (50 bps per unit turnover).
const DEFAULT_COST_BPS: f64 = 50.0;

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Returns panel CSV: a `date` column plus one column per asset.
    #[arg(long, env = "SPACEPORT_INPUT")]
    input: PathBuf,

    /// Directory the outputs are written into (created if missing).
    #[arg(long, default_value = ".", env = "SPACEPORT_OUT")]
    out: PathBuf,

    /// Optional `key = value` file supplying any of the flags below.
    #[arg(long, env = "SPACEPORT_CONFIG")]
    config: Option<PathBuf>,

    /// Training window length (periods); every fit uses this many rows.
    #[arg(long, env = "SPACEPORT_TRAIN_LENGTH")]
    train_length: Option<usize>,

    /// Comma-separated estimator tags to evaluate.
    #[arg(long, env = "SPACEPORT_ESTIMATORS")]
    estimators: Option<String>,

    /// Portfolio rule: gmv or markowitz.
    #[arg(long, env = "SPACEPORT_PORTFOLIO")]
    portfolio: Option<String>,

    /// Target mean for the markowitz portfolio (per-period decimal).
    #[arg(long, env = "SPACEPORT_TARGET")]
    target: Option<f64>,

    /// Proportional transaction cost in basis points per unit turnover.
    #[arg(long, env = "SPACEPORT_COST_BPS")]
    cost_bps: Option<f64>,

    /// Rebalance every this many test periods; holdings drift in between.
    #[arg(long, env = "SPACEPORT_REBALANCE_EVERY")]
    rebalance_every: Option<usize>,

    /// Charge the initial allocation as a trade in the first period.
    #[arg(long, value_name = "BOOL", env = "SPACEPORT_CHARGE_INITIAL_TRADE")]
    charge_initial_trade: Option<bool>,

    /// Per-period risk-free rate CSV (date, rate) subtracted from every
    /// asset column before anything else.
    #[arg(long, env = "SPACEPORT_RISK_FREE")]
    risk_free: Option<PathBuf>,
}

/// Flag/file/default merge result; also the manifest's `config` block.
#[derive(Debug, Serialize)]
struct ResolvedBacktest {
    input: String,
    train_length: usize,
    estimators: Vec<EstimatorTag>,
    portfolio: PortfolioKind,
    /// Recorded whenever the portfolio is mean-constrained.
    target: Option<f64>,
    cost_rate: f64,
    rebalance_every: usize,
    charge_initial_trade: bool,
    risk_free: Option<String>,
    space: SpaceConfig,
    nodewise: NodewiseConfig,
}

fn resolve(args: &BacktestArgs, file: &mut KvConfig) -> Result<ResolvedBacktest> {
    // Always consume the file's key, then let an explicit flag win, so
    // `finish()` can treat every leftover key as unknown.
    let train_length = args
        .train_length
        .or(file.take_parsed::<usize>("train-length")?)
        .context("--train-length is required (flag or config file)")?;

    let file_estimators = file.take("estimators");
    let estimators = match args.estimators.clone().or(file_estimators) {
        Some(raw) => split_list(&raw)
            .iter()
            .map(|s| Ok(EstimatorTag::parse(s)?))
            .collect::<Result<Vec<_>>>()?,
        None => vec![
            EstimatorTag::SpaceUnweighted,
            EstimatorTag::SpaceWeighted,
            EstimatorTag::Nodewise,
            EstimatorTag::LedoitWolf,
        ],
    };
    for tag in &estimators {
        if matches!(tag, EstimatorTag::Exact | EstimatorTag::Poet) {
            bail!("estimator {:?} cannot be fit from data", tag.as_str());
        }
    }

    let file_portfolio = file.take("portfolio");
    let portfolio = match args.portfolio.clone().or(file_portfolio) {
        Some(s) => PortfolioKind::parse(&s)?,
        None => PortfolioKind::Gmv,
    };
    let target = args.target.or(file.take_parsed::<f64>("target")?);
    let target = match portfolio {
        PortfolioKind::Markowitz => Some(target.unwrap_or(DEFAULT_TARGET_RETURN)),
        PortfolioKind::Gmv => {
            if target.is_some() {
                bail!("--target only applies to the markowitz portfolio");
            }
            None
        }
    };

    let cost_bps = args
        .cost_bps
        .or(file.take_parsed::<f64>("cost-bps")?)
        .unwrap_or(DEFAULT_COST_BPS);
    if !(cost_bps >= 0.0) || !cost_bps.is_finite() {
        bail!("--cost-bps must be nonnegative, got {cost_bps}");
    }

    let file_risk_free = file.take("risk-free").map(PathBuf::from);
    let risk_free = args.risk_free.clone().or(file_risk_free);

    Ok(ResolvedBacktest {
        input: args.input.display().to_string(),
        train_length,
        estimators,
        portfolio,
        target,
        cost_rate: cost_bps / 10_000.0,
        rebalance_every: args
            .rebalance_every
            .or(file.take_parsed::<usize>("rebalance-every")?)
            .unwrap_or(1),
        charge_initial_trade: args
            .charge_initial_trade
            .or(file.take_parsed::<bool>("charge-initial-trade")?)
            .unwrap_or(false),
        risk_free: risk_free.map(|p| p.display().to_string()),
        space: SpaceConfig::default(),
        nodewise: NodewiseConfig::default(),
    })
}

fn estimator_choice(tag: EstimatorTag, resolved: &ResolvedBacktest) -> EstimatorChoice {
    match tag {
        EstimatorTag::SpaceUnweighted => EstimatorChoice::SpaceUnweighted(resolved.space.clone()),
        EstimatorTag::SpaceWeighted => EstimatorChoice::SpaceWeighted(resolved.space.clone()),
        EstimatorTag::Nodewise => EstimatorChoice::Nodewise(resolved.nodewise.clone()),
        EstimatorTag::LedoitWolf => EstimatorChoice::LedoitWolf,
        EstimatorTag::Exact | EstimatorTag::Poet => unreachable!("rejected in resolve"),
    }
}

pub fn run(args: &BacktestArgs, jobs: Option<usize>) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::empty(),
    };
    let resolved = resolve(args, &mut file)?;
    file.finish()?;

    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::begin("backtest", None, jobs);
    manifest.add_input(&args.input)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    manifest.set_config(&resolved)?;

    let mut x = read_returns_csv(&args.input)
        .with_context(|| format!("cannot ingest {}", args.input.display()))?;
    if let Some(rf) = &resolved.risk_free {
        let path = Path::new(rf);
        manifest.add_input(path)?;
        let rates = read_rate_csv(path)
            .with_context(|| format!("cannot ingest risk-free rates {}", path.display()))?;
        x = subtract_rate(&x, &rates)?;
    }

    let mut summaries = Vec::new();
    for &tag in &resolved.estimators {
        let mut cfg = BacktestConfig::new(
            resolved.train_length,
            estimator_choice(tag, &resolved),
            resolved.portfolio,
        );
        cfg.cost_rate = resolved.cost_rate;
        cfg.rebalance_every = resolved.rebalance_every;
        cfg.charge_initial_trade = resolved.charge_initial_trade;
        if let Some(t) = resolved.target {
            cfg.target = Some(PortfolioTarget::new(t)?);
        }

        let report = run_backtest(&x, &cfg)
            .with_context(|| format!("backtest failed for {}", tag.as_str()))?;
        log_fallbacks(&report);

        let periods_name = format!("periods_{}.csv", tag.as_str());
        write_periods_csv(&args.out.join(&periods_name), &report)?;
        manifest.record_output(&periods_name);

        let report_name = format!("report_{}.json", tag.as_str());
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(args.out.join(&report_name), text + "\n")
            .with_context(|| format!("cannot write {report_name}"))?;
        manifest.record_output(&report_name);

        summaries.push(report);
    }

    write_summary_csv(&args.out.join("summary.csv"), &summaries)?;
    manifest.record_output("summary.csv");

    manifest.write(&args.out)?;
    println!(
        "backtest: {} estimator(s) over {} test period(s) -> {}",
        resolved.estimators.len(),
        x.n_periods() - resolved.train_length,
        args.out.display()
    );
    Ok(())
}

fn log_fallbacks(report: &BacktestReport) {
    let fallbacks = report
        .refits
        .iter()
        .filter(|r| r.markowitz_fallback)
        .count();
    if fallbacks > 0 {
        eprintln!(
            "note: {}: {} window(s) fell back to the minimum-variance weights \
             (degenerate mean-constrained solve)",
            report.estimator, fallbacks
        );
    }
    let stalled = report
        .refits
        .iter()
        .filter(|r| r.converged == Some(false))
        .count();
    if stalled > 0 {
        eprintln!(
            "note: {}: {} window fit(s) hit the sweep cap before converging",
            report.estimator, stalled
        );
    }
}

fn write_periods_csv(path: &Path, report: &BacktestReport) -> Result<()> {
    let mut wtr =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    wtr.write_record(["date", "gross", "net", "turnover"])?;
    for rec in &report.periods {
        wtr.write_record([
            rec.date.clone(),
            rec.gross.to_string(),
            rec.net.to_string(),
            rec.turnover.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Combined summary table: one no-cost and one with-cost row per estimator,
/// in the column layout of the standard performance tables.
fn write_summary_csv(path: &Path, reports: &[BacktestReport]) -> Result<()> {
    let mut wtr =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    wtr.write_record([
        "estimator",
        "portfolio",
        "cost",
        "mean_return",
        "variance",
        "sharpe",
        "turnover",
    ])?;
    for report in reports {
        for (label, perf) in [
            ("none", &report.no_cost),
            ("proportional", &report.with_cost),
        ] {
            wtr.write_record([
                report.estimator.clone(),
                report.portfolio.clone(),
                label.to_owned(),
                perf.mean_return.to_string(),
                perf.variance.to_string(),
                perf.sharpe.to_string(),
                report.turnover.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

//! `spaceport estimate`: fit one estimator on a returns CSV and export the
//! estimate as JSON metadata, a dense precision CSV and (for the sparse
//! partial-correlation variants) an edge list for network tooling.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use spaceport::baselines::{fit_ledoit_wolf, fit_nodewise, NodewiseConfig, NodewiseLambda};
use spaceport::io::read_returns_csv;
use spaceport::space::{fit_space, LambdaChoice, SpaceConfig, WeightMode};
use spaceport::types::{
    pair_index, pairs, precision_from_decomposition, EstimatorTag, PrecisionMatrix, ReturnsMatrix,
};

use crate::kv::KvConfig;
use crate::manifest::{ensure_out_dir, RunManifest};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Returns panel CSV: a `date` column plus one column per asset.
    #[arg(long, env = "SPACEPORT_INPUT")]
    input: PathBuf,

    /// Directory the outputs are written into (created if missing).
    #[arg(long, default_value = ".", env = "SPACEPORT_OUT")]
    out: PathBuf,

    /// Optional `key = value` file supplying any of the flags below.
    #[arg(long, env = "SPACEPORT_CONFIG")]
    config: Option<PathBuf>,

    /// One of: space-unweighted, space-weighted, nodewise, ledoit-wolf.
    #[arg(long, env = "SPACEPORT_ESTIMATOR")]
    estimator: Option<String>,

    /// Penalty level: "auto" for the information-criterion grid search, or
    /// a fixed nonnegative number on the fitted (standardized) scale.
    #[arg(long, env = "SPACEPORT_LAMBDA")]
    lambda: Option<String>,

    /// Fit the sparse variants on variance-standardized columns.
    #[arg(long, value_name = "BOOL", env = "SPACEPORT_STANDARDIZE")]
    standardize: Option<bool>,

    /// Grid points for automatic penalty selection.
    #[arg(long, env = "SPACEPORT_GRID_SIZE")]
    grid_size: Option<usize>,
}

/// Flag/file/default merge result; also the manifest's `config` block.
#[derive(Debug, Serialize)]
struct ResolvedEstimate {
    input: String,
    estimator: EstimatorTag,
    lambda: String,
    standardize: bool,
    grid_size: usize,
}

fn resolve(args: &EstimateArgs, file: &mut KvConfig) -> Result<ResolvedEstimate> {
    // Always consume the file's key, then let an explicit flag win, so
    // `finish()` can treat every leftover key as unknown.
    let file_estimator = file.take("estimator");
    let estimator = args
        .estimator
        .clone()
        .or(file_estimator)
        .unwrap_or_else(|| "space-unweighted".to_owned());
    let estimator = EstimatorTag::parse(&estimator)?;
    match estimator {
        EstimatorTag::SpaceUnweighted
        | EstimatorTag::SpaceWeighted
        | EstimatorTag::Nodewise
        | EstimatorTag::LedoitWolf => {}
        EstimatorTag::Exact | EstimatorTag::Poet => {
            bail!("estimator {:?} cannot be fit from data", estimator.as_str())
        }
    }
    let file_lambda = file.take("lambda");
    let lambda = args
        .lambda
        .clone()
        .or(file_lambda)
        .unwrap_or_else(|| "auto".to_owned());
    if lambda != "auto" {
        let value: f64 = lambda
            .parse()
            .with_context(|| format!("--lambda must be \"auto\" or a number, got {lambda:?}"))?;
        if !(value >= 0.0) || !value.is_finite() {
            bail!("--lambda must be nonnegative, got {value}");
        }
        if estimator == EstimatorTag::LedoitWolf {
            bail!("ledoit-wolf has no penalty; drop --lambda or use \"auto\"");
        }
    }
    Ok(ResolvedEstimate {
        input: args.input.display().to_string(),
        estimator,
        lambda,
        standardize: args
            .standardize
            .or(file.take_parsed::<bool>("standardize")?)
            .unwrap_or(true),
        grid_size: args
            .grid_size
            .or(file.take_parsed::<usize>("grid-size")?)
            .unwrap_or(30),
    })
}

fn lambda_choice(resolved: &ResolvedEstimate) -> Result<LambdaChoice> {
    if resolved.lambda == "auto" {
        Ok(LambdaChoice::Auto)
    } else {
        Ok(LambdaChoice::Fixed(resolved.lambda.parse()?))
    }
}

pub fn run(args: &EstimateArgs, jobs: Option<usize>) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::empty(),
    };
    let resolved = resolve(args, &mut file)?;
    file.finish()?;

    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::begin("estimate", None, jobs);
    manifest.add_input(&args.input)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    manifest.set_config(&resolved)?;

    let x = read_returns_csv(&args.input)
        .with_context(|| format!("cannot ingest {}", args.input.display()))?;

    let (fit_json, precision) = match resolved.estimator {
        EstimatorTag::SpaceUnweighted | EstimatorTag::SpaceWeighted => {
            fit_space_variant(&x, &resolved, &args.out, &mut manifest)?
        }
        EstimatorTag::Nodewise => fit_nodewise_variant(&x, &resolved)?,
        EstimatorTag::LedoitWolf => fit_ledoit_wolf_variant(&x)?,
        EstimatorTag::Exact | EstimatorTag::Poet => unreachable!("rejected in resolve"),
    };

    write_json(&args.out.join("fit.json"), &fit_json)?;
    manifest.record_output("fit.json");
    write_precision_csv(
        &args.out.join("precision.csv"),
        &precision,
        x.asset_labels(),
    )?;
    manifest.record_output("precision.csv");

    manifest.write(&args.out)?;
    println!(
        "estimate: {} on {} assets x {} periods -> {}",
        resolved.estimator.as_str(),
        x.n_assets(),
        x.n_periods(),
        args.out.display()
    );
    Ok(())
}

fn fit_space_variant(
    x: &ReturnsMatrix,
    resolved: &ResolvedEstimate,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<(serde_json::Value, PrecisionMatrix)> {
    let cfg = SpaceConfig {
        lambda: lambda_choice(resolved)?,
        weight_mode: match resolved.estimator {
            EstimatorTag::SpaceUnweighted => WeightMode::Uniform,
            _ => WeightMode::Precision,
        },
        standardize: resolved.standardize,
        lambda_grid_size: resolved.grid_size,
        ..SpaceConfig::default()
    };
    let fit = fit_space(x, &cfg)?;
    if !fit.converged() {
        eprintln!("warning: coordinate descent hit its sweep cap; estimate may be inexact");
    }
    let d = fit.decomposition();
    let precision = precision_from_decomposition(d, resolved.estimator)?;

    // Edge list for external network/chord tooling: nonzero pairs only.
    let edges_path = out.join("edges.csv");
    let mut wtr = csv::Writer::from_path(&edges_path)
        .with_context(|| format!("cannot write {}", edges_path.display()))?;
    wtr.write_record(["i", "j", "asset_i", "asset_j", "rho"])?;
    let labels = x.asset_labels();
    for (i, j) in pairs(d.dim()) {
        let rho = d.rho()[pair_index(d.dim(), i, j)];
        if rho != 0.0 {
            wtr.write_record([
                i.to_string(),
                j.to_string(),
                labels[i].clone(),
                labels[j].clone(),
                rho.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    manifest.record_output("edges.csv");

    let value = json!({
        "estimator": resolved.estimator,
        "n_periods": x.n_periods(),
        "n_assets": x.n_assets(),
        "lambda_used": fit.lambda_used(),
        "converged": fit.converged(),
        "clamped": fit.clamped(),
        "sweeps_per_outer": fit.sweeps_per_outer(),
        "objective_trace": fit.objective_trace(),
        "nonzero_pairs": fit.nonzero_count(),
        "omega_diag": d.omega_diag(),
        "config": cfg,
    });
    Ok((value, precision))
}

fn fit_nodewise_variant(
    x: &ReturnsMatrix,
    resolved: &ResolvedEstimate,
) -> Result<(serde_json::Value, PrecisionMatrix)> {
    let cfg = NodewiseConfig {
        lambda: if resolved.lambda == "auto" {
            NodewiseLambda::Gic
        } else {
            NodewiseLambda::Fixed(resolved.lambda.parse()?)
        },
        grid_size: resolved.grid_size,
        ..NodewiseConfig::default()
    };
    let fit = fit_nodewise(x, &cfg)?;
    if !fit.converged() {
        eprintln!("warning: coordinate descent hit its sweep cap; estimate may be inexact");
    }
    let value = json!({
        "estimator": resolved.estimator,
        "n_periods": x.n_periods(),
        "n_assets": x.n_assets(),
        "lambda_per_node": fit.lambda_per_node(),
        "tau_sq": fit.tau_sq(),
        "converged": fit.converged(),
        "nonzero_offdiagonals": fit.nonzero_count(),
        "config": cfg,
    });
    Ok((value, fit.into_precision()))
}

fn fit_ledoit_wolf_variant(x: &ReturnsMatrix) -> Result<(serde_json::Value, PrecisionMatrix)> {
    let fit = fit_ledoit_wolf(x)?;
    let value = json!({
        "estimator": EstimatorTag::LedoitWolf,
        "n_periods": x.n_periods(),
        "n_assets": x.n_assets(),
        "shrinkage": fit.shrinkage(),
    });
    Ok((value, fit.precision().clone()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Dense symmetric matrix with labeled rows and columns.
fn write_precision_csv(path: &Path, m: &PrecisionMatrix, labels: &[String]) -> Result<()> {
    let mut wtr =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["asset".to_owned()];
    header.extend_from_slice(labels);
    wtr.write_record(&header)?;
    let values = m.values();
    for i in 0..m.dim() {
        let mut row = vec![labels[i].clone()];
        for j in 0..m.dim() {
            row.push(values[(i, j)].to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

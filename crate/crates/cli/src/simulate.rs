//! `spaceport simulate`: Monte-Carlo study over synthetic return processes,
//! producing the long-format metric tables (CSV and JSON) plus a manifest.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use spaceport::portfolio::PortfolioKind;
use spaceport::simulation::{
    run_study, DgpKind, DgpSpec, MarkowitzMu, MeanMode, StudyCell, StudyConfig, DAILY_TARGET_RETURN,
};
use spaceport::types::EstimatorTag;

use crate::kv::{split_list, KvConfig};
use crate::manifest::{ensure_out_dir, RunManifest};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory the outputs are written into (created if missing).
    #[arg(long, default_value = ".", env = "SPACEPORT_OUT")]
    out: PathBuf,

    /// Bundled study configuration (see `--list-presets`).
    #[arg(long, conflicts_with = "config", env = "SPACEPORT_PRESET")]
    preset: Option<String>,

    /// `key = value` study file; flags override its entries.
    #[arg(long, env = "SPACEPORT_CONFIG")]
    config: Option<PathBuf>,

    /// Print the bundled preset names and exit.
    #[arg(long)]
    list_presets: bool,

    /// Process kind: toeplitz or sparse-factor.
    #[arg(long, env = "SPACEPORT_DGP")]
    dgp: Option<String>,

    /// Comma-separated (periods x assets) cells, e.g. "100x50, 200x100".
    #[arg(long, conflicts_with_all = ["n", "p"], env = "SPACEPORT_CELLS")]
    cells: Option<String>,

    /// Periods for a single-cell study (with --p).
    #[arg(long, requires = "p")]
    n: Option<usize>,

    /// Assets for a single-cell study (with --n).
    #[arg(long, requires = "n")]
    p: Option<usize>,

    /// Portfolio rule: gmv or markowitz.
    #[arg(long, env = "SPACEPORT_PORTFOLIO")]
    portfolio: Option<String>,

    /// Comma-separated estimator tags to run.
    #[arg(long, env = "SPACEPORT_ESTIMATORS")]
    estimators: Option<String>,

    /// Replications per cell.
    #[arg(long, env = "SPACEPORT_REPLICATIONS")]
    replications: Option<usize>,

    /// Root seed; every replication stream is derived from it.
    #[arg(long, env = "SPACEPORT_SEED")]
    seed: Option<u64>,

    /// Target mean for mean-constrained cells (per-period decimal).
    #[arg(long, env = "SPACEPORT_TARGET")]
    target: Option<f64>,

    /// Mean fed to the mean-constrained solver: sample or true.
    #[arg(long, env = "SPACEPORT_MARKOWITZ_MU")]
    markowitz_mu: Option<String>,

    /// Variance of the per-replication Gaussian mean vector.
    #[arg(long, env = "SPACEPORT_MEAN_VARIANCE")]
    mean_variance: Option<f64>,
}

fn parse_cells(raw: &str) -> Result<Vec<(usize, usize)>> {
    let mut cells = Vec::new();
    for item in split_list(raw) {
        let (n, p) = item
            .split_once(['x', 'X'])
            .with_context(|| format!("cell {item:?} is not of the form <n>x<p>"))?;
        let n: usize = n
            .trim()
            .parse()
            .with_context(|| format!("bad n in cell {item:?}"))?;
        let p: usize = p
            .trim()
            .parse()
            .with_context(|| format!("bad p in cell {item:?}"))?;
        cells.push((n, p));
    }
    if cells.is_empty() {
        bail!("empty cell list {raw:?}");
    }
    Ok(cells)
}

fn parse_estimators(raw: &str) -> Result<Vec<EstimatorTag>> {
    split_list(raw)
        .iter()
        .map(|s| Ok(EstimatorTag::parse(s)?))
        .collect()
}

/// Merges flags over file entries over defaults into a full study config.
fn resolve(args: &SimulateArgs, file: &mut KvConfig) -> Result<StudyConfig> {
    // Always consume the file's key, then let an explicit flag win, so
    // `finish()` can treat every leftover key as unknown.
    let file_dgp = file.take("dgp");
    let dgp_kind = match args.dgp.clone().or(file_dgp) {
        Some(s) => DgpKind::parse(&s)?,
        None => DgpKind::Toeplitz,
    };

    let file_cells = file.take("cells");
    let file_n = file.take_parsed::<usize>("n")?;
    let file_p = file.take_parsed::<usize>("p")?;
    if file_cells.is_some() && (file_n.is_some() || file_p.is_some()) {
        bail!("config file sets both cells and n/p; use one");
    }
    let shapes = match (args.n, args.p) {
        (Some(n), Some(p)) => vec![(n, p)],
        _ => match args.cells.clone().or(file_cells) {
            Some(raw) => parse_cells(&raw)?,
            None => match (file_n, file_p) {
                (Some(n), Some(p)) => vec![(n, p)],
                (None, None) => vec![(100, 50)],
                _ => bail!("n and p must be given together"),
            },
        },
    };

    let file_portfolio = file.take("portfolio");
    let portfolio = match args.portfolio.clone().or(file_portfolio) {
        Some(s) => PortfolioKind::parse(&s)?,
        None => PortfolioKind::Gmv,
    };

    let file_estimators = file.take("estimators");
    let estimators = match args.estimators.clone().or(file_estimators) {
        Some(raw) => parse_estimators(&raw)?,
        None => vec![
            EstimatorTag::SpaceUnweighted,
            EstimatorTag::SpaceWeighted,
            EstimatorTag::Nodewise,
            EstimatorTag::LedoitWolf,
            EstimatorTag::Exact,
        ],
    };

    let replications = args
        .replications
        .or(file.take_parsed::<usize>("replications")?)
        .unwrap_or(20);
    let seed = args.seed.or(file.take_parsed::<u64>("seed")?).unwrap_or(1);

    let target = args.target.or(file.take_parsed::<f64>("target")?);
    let mean_variance = args
        .mean_variance
        .or(file.take_parsed::<f64>("mean-variance")?);
    let file_mu = file.take("markowitz-mu");
    let markowitz_mu = match args.markowitz_mu.clone().or(file_mu) {
        Some(s) => match s.as_str() {
            "sample" => MarkowitzMu::Sample,
            "true" => MarkowitzMu::True,
            other => bail!("markowitz-mu must be \"sample\" or \"true\", got {other:?}"),
        },
        None => MarkowitzMu::Sample,
    };

    let mean = match portfolio {
        PortfolioKind::Markowitz => MeanMode::Gaussian {
            // The conventional scales: 1e-4 for the Toeplitz process, 1e-2
            // for the factor process.
            variance: mean_variance.unwrap_or(match dgp_kind {
                DgpKind::Toeplitz => 1e-4,
                DgpKind::SparseFactor => 1e-2,
            }),
        },
        PortfolioKind::Gmv => match mean_variance {
            Some(variance) => MeanMode::Gaussian { variance },
            None => MeanMode::Zero,
        },
    };
    let cell_target = match portfolio {
        PortfolioKind::Markowitz => Some(target.unwrap_or(DAILY_TARGET_RETURN)),
        PortfolioKind::Gmv => {
            if target.is_some() {
                bail!("--target only applies to the markowitz portfolio");
            }
            None
        }
    };

    let cells = shapes
        .into_iter()
        .map(|(n, p)| {
            let base = match dgp_kind {
                DgpKind::Toeplitz => DgpSpec::toeplitz(n, p),
                DgpKind::SparseFactor => DgpSpec::sparse_factor(n, p),
            };
            StudyCell {
                dgp: base.with_mean(mean),
                portfolio,
                target: cell_target,
            }
        })
        .collect();

    let mut cfg = StudyConfig::new(cells, estimators, replications, seed);
    cfg.markowitz_mu = markowitz_mu;
    Ok(cfg)
}

pub fn run(args: &SimulateArgs, jobs: Option<usize>) -> Result<()> {
    if args.list_presets {
        for (name, _) in crate::kv::PRESETS {
            println!("{name}");
        }
        return Ok(());
    }

    let mut file = match (&args.preset, &args.config) {
        (Some(name), _) => KvConfig::preset(name)?,
        (None, Some(path)) => KvConfig::load(path)?,
        (None, None) => KvConfig::empty(),
    };
    let cfg = resolve(args, &mut file)?;
    file.finish()?;

    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::begin("simulate", Some(cfg.seed), jobs);
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    manifest.set_config(&cfg)?;

    let table = run_study(&cfg)?;

    for d in table.diagnostics() {
        if d.convergence_failures > 0 || d.repairs > 0 || d.failures > 0 {
            eprintln!(
                "note: {} n={} p={} {} {}: {} convergence failure(s), {} repair(s), {} excluded",
                d.dgp,
                d.n,
                d.p,
                d.portfolio,
                d.estimator,
                d.convergence_failures,
                d.repairs,
                d.failures
            );
        }
    }

    let csv_path = args.out.join("study.csv");
    let file_out = std::fs::File::create(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    table.write_csv(file_out)?;
    manifest.record_output("study.csv");

    let json_path = args.out.join("study.json");
    std::fs::write(&json_path, table.to_json()? + "\n")
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    manifest.record_output("study.json");

    manifest.write(&args.out)?;
    println!(
        "simulate: {} cell(s) x {} estimator(s) x {} replication(s) -> {}",
        cfg.cells.len(),
        cfg.estimators.len(),
        cfg.replications,
        args.out.display()
    );
    Ok(())
}

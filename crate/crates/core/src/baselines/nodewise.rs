//! Nodewise-regression precision estimation.
//!
//! Each asset `j` is lasso-regressed on all the others:
//!
//! ```text
//! gamma_j = argmin (1/n) * || X_j - X_{-j} gamma ||^2 + 2 * lambda_j * ||gamma||_1
//! ```
//!
//! on centered columns, with the per-node penalty chosen by a generalized
//! information criterion. The noise level is estimated as
//! `tau_j^2 = RSS_j / n + lambda_j * ||gamma_j||_1` and row `j` of the
//! precision estimate is assembled as
//!
//! ```text
//! theta_jj = 1 / tau_j^2,    theta_jk = -gamma_jk / tau_j^2.
//! ```
//!
//! The rows come from unrelated regressions, so the assembled matrix is
//! deliberately *not* symmetrized; it is tagged asymmetric and downstream
//! consumers treat it accordingly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{EstimatorTag, PrecisionMatrix, ReturnsMatrix};

/// Subgradient slack at which a per-node lasso sweep is accepted.
const KKT_EXIT_TOL: f64 = 1e-5;

/// Ratio between the largest and smallest grid point in automatic penalty
/// selection.
const LAMBDA_GRID_SPAN: f64 = 100.0;

/// How each node's penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodewiseLambda {
    /// Per-node geometric grid from that node's `lambda_max` down to
    /// `lambda_max / 100`, scored by
    /// `GIC(lambda) = ln(RSS/n) + k * ln(p) * ln(ln n) / n`.
    Gic,
    /// The same fixed penalty for every node.
    Fixed(f64),
}

/// Configuration for [`fit_nodewise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseConfig {
    pub lambda: NodewiseLambda,
    /// Number of grid points for automatic penalty selection.
    pub grid_size: usize,
    /// A pass counts as stable when no coefficient moves by more than this.
    pub coord_tolerance: f64,
    /// Hard cap on coordinate-descent passes per node and penalty.
    pub max_sweeps: usize,
}

impl Default for NodewiseConfig {
    fn default() -> Self {
        Self {
            lambda: NodewiseLambda::Gic,
            grid_size: 30,
            coord_tolerance: 1e-6,
            max_sweeps: 1000,
        }
    }
}

impl NodewiseConfig {
    fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be >= 2".into()));
        }
        if !(self.coord_tolerance > 0.0) || !self.coord_tolerance.is_finite() {
            return Err(Error::Config(format!(
                "coord_tolerance must be a positive number, got {}",
                self.coord_tolerance
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be >= 1".into()));
        }
        if let NodewiseLambda::Fixed(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Config(format!(
                    "fixed lambda must be finite and >= 0, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of a nodewise fit: the assembled (asymmetric) precision estimate
/// plus per-node diagnostics.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    precision: PrecisionMatrix,
    lambda_per_node: Vec<f64>,
    tau_sq: Vec<f64>,
    converged: bool,
}

impl NodewiseFit {
    /// The assembled precision estimate, tagged
    /// [`EstimatorTag::Nodewise`] and asymmetric.
    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    pub fn into_precision(self) -> PrecisionMatrix {
        self.precision
    }

    /// Penalty used by each node's regression.
    pub fn lambda_per_node(&self) -> &[f64] {
        &self.lambda_per_node
    }

    /// Estimated residual variances `tau_j^2`.
    pub fn tau_sq(&self) -> &[f64] {
        &self.tau_sq
    }

    /// Whether every node's final coordinate descent exited on tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Number of nonzero off-diagonal entries of the assembled estimate.
    pub fn nonzero_count(&self) -> usize {
        let m = self.precision.values();
        let p = m.nrows();
        (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && m[(i, j)] != 0.0)
            .count()
    }
}

/// Centered design shared by all nodes.
struct Centered {
    z: DMatrix<f64>,
    col_sq: Vec<f64>,
    n: usize,
    p: usize,
}

impl Centered {
    fn build(x: &ReturnsMatrix) -> Result<Self> {
        let n = x.n_periods();
        let p = x.n_assets();
        let mut z = x.values().clone();
        for j in 0..p {
            let raw_sq = z.column(j).norm_squared();
            let mean = z.column(j).sum() / n as f64;
            z.column_mut(j).add_scalar_mut(-mean);
            let s = z.column(j).norm_squared();
            // The relative floor catches constant nonzero columns, whose
            // centered variance is rounding residue rather than exact zero.
            if !(s > 1e-24 * raw_sq) || !s.is_finite() {
                return Err(Error::DegenerateColumn {
                    label: x.asset_labels()[j].clone(),
                });
            }
        }
        let col_sq = (0..p).map(|j| z.column(j).norm_squared()).collect();
        Ok(Self { z, col_sq, n, p })
    }
}

/// Coordinate descent for one node at one penalty. `gamma` indexes the
/// predictors `k != node` directly by column; entry `node` stays zero.
/// Returns `true` when the exit was on tolerance.
fn lasso_node(
    c: &Centered,
    node: usize,
    lambda: f64,
    gamma: &mut DVector<f64>,
    resid: &mut DVector<f64>,
    cfg: &NodewiseConfig,
) -> bool {
    // The working objective is n/2 times the stated one:
    // 1/2 ||y - D gamma||^2 + n * lambda * ||gamma||_1.
    let thr = c.n as f64 * lambda;
    let mut sweeps = 0usize;
    loop {
        let (delta, kkt) = lasso_sweep(c, node, thr, gamma, resid, None);
        sweeps += 1;
        if delta <= cfg.coord_tolerance && kkt <= KKT_EXIT_TOL {
            return true;
        }
        if sweeps >= cfg.max_sweeps {
            return false;
        }
        loop {
            let active: Vec<usize> = (0..c.p).filter(|&k| k != node && gamma[k] != 0.0).collect();
            if active.is_empty() {
                break;
            }
            let (d, _) = lasso_sweep(c, node, thr, gamma, resid, Some(&active));
            sweeps += 1;
            if d <= cfg.coord_tolerance || sweeps >= cfg.max_sweeps {
                break;
            }
        }
        if sweeps >= cfg.max_sweeps {
            return false;
        }
    }
}

fn lasso_sweep(
    c: &Centered,
    node: usize,
    thr: f64,
    gamma: &mut DVector<f64>,
    resid: &mut DVector<f64>,
    subset: Option<&[usize]>,
) -> (f64, f64) {
    let mut delta_max = 0.0f64;
    let mut kkt_max = 0.0f64;
    let full: Vec<usize>;
    let indices: &[usize] = match subset {
        Some(s) => s,
        None => {
            full = (0..c.p).filter(|&k| k != node).collect();
            &full
        }
    };
    for &k in indices {
        let old = gamma[k];
        let a = c.col_sq[k];
        let b = c.z.column(k).dot(resid) + old * a;
        let viol = if old != 0.0 {
            (a * old - b + thr * old.signum()).abs()
        } else {
            (b.abs() - thr).max(0.0)
        };
        kkt_max = kkt_max.max(viol);
        let new = soft_threshold(b, thr) / a;
        if new != old {
            gamma[k] = new;
            let zk = c.z.column(k).clone_owned();
            resid.axpy(old - new, &zk, 1.0);
            delta_max = delta_max.max((new - old).abs());
        }
    }
    (delta_max, kkt_max)
}

fn soft_threshold(b: f64, lambda: f64) -> f64 {
    if b > lambda {
        b - lambda
    } else if b < -lambda {
        b + lambda
    } else {
        0.0
    }
}

/// Fits all per-node lasso regressions and assembles the precision estimate.
/// Requires `n >= 3` (the information criterion involves `ln(ln n)`).
pub fn fit_nodewise(x: &ReturnsMatrix, cfg: &NodewiseConfig) -> Result<NodewiseFit> {
    cfg.validate()?;
    if x.n_periods() < 3 {
        return Err(Error::InvalidInput(format!(
            "nodewise estimation needs at least 3 periods, got {}",
            x.n_periods()
        )));
    }
    let c = Centered::build(x)?;
    let n_f = c.n as f64;
    let gic_factor = (c.p as f64).ln() * n_f.ln().ln() / n_f;

    let mut theta = DMatrix::zeros(c.p, c.p);
    let mut lambda_per_node = Vec::with_capacity(c.p);
    let mut tau_sq_all = Vec::with_capacity(c.p);
    let mut converged = true;

    for node in 0..c.p {
        let y = c.z.column(node).clone_owned();
        let grid: Vec<f64> = match cfg.lambda {
            NodewiseLambda::Fixed(l) => vec![l],
            NodewiseLambda::Gic => {
                let lmax = (0..c.p)
                    .filter(|&k| k != node)
                    .map(|k| c.z.column(k).dot(&y).abs() / n_f)
                    .fold(0.0f64, f64::max);
                if lmax <= 0.0 {
                    vec![0.0]
                } else {
                    (0..cfg.grid_size)
                        .map(|t| {
                            lmax * LAMBDA_GRID_SPAN.powf(-(t as f64) / (cfg.grid_size - 1) as f64)
                        })
                        .collect()
                }
            }
        };

        let mut gamma = DVector::zeros(c.p);
        let mut resid = y.clone();
        let mut best: Option<(f64, f64, DVector<f64>, f64, bool)> = None;
        for &lambda in &grid {
            let ok = lasso_node(&c, node, lambda, &mut gamma, &mut resid, cfg);
            let rss = resid.norm_squared();
            let k_active = (0..c.p).filter(|&k| gamma[k] != 0.0).count();
            let gic = (rss / n_f).ln() + k_active as f64 * gic_factor;
            // Strict comparison keeps the earliest (sparsest) winner on ties.
            if best.as_ref().is_none_or(|(_, s, _, _, _)| gic < *s) {
                best = Some((lambda, gic, gamma.clone(), rss, ok));
            }
        }
        let (lambda_j, _, gamma_j, rss_j, ok) = best.expect("penalty grid is non-empty");
        converged &= ok;

        let l1: f64 = gamma_j.iter().map(|g| g.abs()).sum();
        let tau_sq = rss_j / n_f + lambda_j * l1;
        if !(tau_sq > 0.0) || !tau_sq.is_finite() {
            return Err(Error::Degenerate(format!(
                "node {node}: residual variance estimate {tau_sq} is not positive"
            )));
        }
        theta[(node, node)] = 1.0 / tau_sq;
        for k in 0..c.p {
            if k != node && gamma_j[k] != 0.0 {
                theta[(node, k)] = -gamma_j[k] / tau_sq;
            }
        }
        lambda_per_node.push(lambda_j);
        tau_sq_all.push(tau_sq);
    }

    Ok(NodewiseFit {
        precision: PrecisionMatrix::new(theta, EstimatorTag::Nodewise)?,
        lambda_per_node,
        tau_sq: tau_sq_all,
        converged,
    })
}

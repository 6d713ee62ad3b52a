use serde::{Deserialize, Serialize};

use crate::bounds::{ah_max_horizon_bound, estimator_bound, optimal_horizon};
use crate::chain::{ChainInstance, Distribution, Kernel, StateFunction};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::instances::no_mixing_instance;
use crate::rng::derive_seed;
use crate::sampling::plan_parallel_horizons;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub gamma: f64,
    pub delta: f64,
    /// Budgets for the rate fits; computational columns use the largest.
    pub budgets: Vec<usize>,
    /// Simulated runs behind the empirical trajectory counts.
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            delta: 0.1,
            budgets: vec![1_000, 10_000, 100_000, 1_000_000],
            replications: 200,
            master_seed: 0,
        }
    }
}

/// Computational cost and fitted concentration rates of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub estimator: EstimatorKind,
    #[serde(rename = "N")]
    pub n: usize,
    /// `⌈T*⌉` for the fixed-horizon estimators.
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    /// Trajectories that can run in parallel: `N/T`, or `E[M] = 1 + (N−1)(1−γ)`.
    pub workers: f64,
    pub workers_empirical: f64,
    /// Longest trajectory: `T`, or the high-probability bound on it.
    pub time: f64,
    pub time_empirical: f64,
    /// Log–log slope of the concentration bound against `N`.
    pub slope_beta0: f64,
    pub slope_beta1: f64,
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::param("points", "need two or more positive points"));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Two-state chain with spectral `β` started away from stationarity, with
/// `f = (1, 0)`. `β = 1` uses the deterministic flip, which still has a
/// unique stationary distribution.
pub fn fh_rate_chain(beta: f64) -> Result<(ChainInstance, StateFunction)> {
    let init = Distribution::new(vec![0.9, 0.1])?;
    let chain = if beta >= 1.0 {
        ChainInstance::new(
            "flip",
            Kernel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]])?,
            init,
        )?
    } else {
        no_mixing_instance(beta)?.with_init(init)?
    };
    Ok((chain, StateFunction::new(vec![1.0, 0.0])))
}

/// `⌈T*⌉` and the multiple of it nearest to `n`.
fn fh_budget(n: usize, gamma: f64) -> Result<(usize, usize)> {
    let t = optimal_horizon(n, gamma)?.rounded;
    let m = ((n as f64 / t as f64).round() as usize).max(1);
    Ok((t, m * t))
}

fn rate_slope(kind: EstimatorKind, beta: f64, cfg: &Table1Config) -> Result<f64> {
    let (chain, f) = fh_rate_chain(beta)?;
    let mut points = Vec::with_capacity(cfg.budgets.len());
    for &n in &cfg.budgets {
        let (horizon, n_used) = if kind.is_fixed_horizon() {
            let (t, m) = fh_budget(n, cfg.gamma)?;
            (Some(t), m)
        } else {
            (None, n)
        };
        let spec = EstimatorSpec::new(kind, cfg.gamma, horizon)?;
        let b = estimator_bound(&chain, &f, &spec, n_used, cfg.delta)?;
        points.push((n_used as f64, b.value));
    }
    loglog_slope(&points)
}

/// Rebuilds the summary table of estimator properties.
pub fn table1(cfg: &Table1Config) -> Result<Vec<Table1Row>> {
    if cfg.budgets.len() < 2 {
        return Err(Error::param(
            "budgets",
            "need at least two budgets for a slope",
        ));
    }
    if cfg.replications == 0 {
        return Err(Error::param("replications", "must be at least 1"));
    }
    let n = *cfg.budgets.iter().max().expect("nonempty");
    let mut rows = Vec::new();
    for kind in EstimatorKind::ALL {
        let slope_beta0 = rate_slope(kind, 0.0, cfg)?;
        let slope_beta1 = rate_slope(kind, 1.0, cfg)?;
        let row = if kind.is_fixed_horizon() {
            let (t, n_used) = fh_budget(n, cfg.gamma)?;
            let workers = (n_used / t) as f64;
            Table1Row {
                estimator: kind,
                n: n_used,
                horizon: Some(t),
                workers,
                workers_empirical: workers,
                time: t as f64,
                time_empirical: t as f64,
                slope_beta0,
                slope_beta1,
            }
        } else {
            let mut count = 0.0;
            let mut longest = 0.0;
            for r in 0..cfg.replications {
                let seed = derive_seed(cfg.master_seed, &[2, 0, n as u64, r as u64]);
                let h = plan_parallel_horizons(cfg.gamma, n, seed)?;
                count += h.len() as f64;
                longest += *h.iter().max().expect("nonempty") as f64;
            }
            let reps = cfg.replications as f64;
            Table1Row {
                estimator: kind,
                n,
                horizon: None,
                workers: 1.0 + (n as f64 - 1.0) * (1.0 - cfg.gamma),
                workers_empirical: count / reps,
                time: ah_max_horizon_bound(n, cfg.gamma, cfg.delta)?,
                time_empirical: longest / reps,
                slope_beta0,
                slope_beta1,
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

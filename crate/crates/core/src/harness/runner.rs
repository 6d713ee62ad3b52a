use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedChain};
use super::emit::ExperimentOutput;
use crate::bounds::{estimator_bound, optimal_horizon};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::rng::derive_seed;
use crate::sampling::{sample_history, ResetPolicy};

/// `None` is written as `NA`.
mod na {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(t) => s.serialize_u64(*t as u64),
            None => s.serialize_str("NA"),
        }
    }

    struct NaVisitor;

    impl Visitor<'_> for NaVisitor {
        type Value = Option<usize>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a nonnegative integer or \"NA\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            usize::try_from(v).map(Some).map_err(E::custom)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            usize::try_from(v).map(Some).map_err(E::custom)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            match v {
                "NA" => Ok(None),
                _ => v.parse().map(Some).map_err(E::custom),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        d.deserialize_any(NaVisitor)
    }
}

/// One replication of one estimator at one budget. A replication whose
/// estimator failed (no reset in the history) has empty `estimate` and
/// `abs_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub chain_name: String,
    pub alpha_or_params: String,
    pub gamma: f64,
    pub estimator: EstimatorKind,
    #[serde(rename = "T_or_NA", with = "na")]
    pub horizon: Option<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed_index: usize,
    pub estimate: Option<f64>,
    pub true_mean: f64,
    pub abs_error: Option<f64>,
}

/// Per-(estimator, N) aggregate with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub chain_name: String,
    pub alpha_or_params: String,
    pub gamma: f64,
    pub estimator: EstimatorKind,
    #[serde(rename = "T_or_NA", with = "na")]
    pub horizon: Option<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub mean_error: Option<f64>,
    pub ci95_lo: Option<f64>,
    pub ci95_hi: Option<f64>,
    pub bound_value: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    spec: EstimatorSpec,
    n: usize,
}

/// Key of the history a job needs: `(policy tag, T, N)`.
fn history_key(job: &Job) -> (u64, u64, usize) {
    match (job.spec.kind.is_fixed_horizon(), job.spec.horizon) {
        (true, Some(t)) => (1, t as u64, job.n),
        _ => (2, 0, job.n),
    }
}

fn in_pool<T: Send>(workers: Option<usize>, op: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::param("workers", e.to_string()))?;
            Ok(pool.install(op))
        }
        None => Ok(op()),
    }
}

/// Runs every job for `replications` seeds; rows come back sorted by job,
/// then replication.
fn run_jobs(
    resolved: &ResolvedChain,
    gamma: f64,
    jobs: &[Job],
    replications: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<ResultRow>> {
    let mut groups: BTreeMap<(u64, u64, usize), Vec<usize>> = BTreeMap::new();
    for (i, job) in jobs.iter().enumerate() {
        groups.entry(history_key(job)).or_default().push(i);
    }
    let units: Vec<((u64, u64, usize), &Vec<usize>, usize)> = groups
        .iter()
        .flat_map(|(key, members)| (0..replications).map(move |r| (*key, members, r)))
        .collect();

    let run_unit = |&((tag, t, n), members, r): &((u64, u64, usize), &Vec<usize>, usize)| {
        let policy = if tag == 1 {
            ResetPolicy::fixed(t as usize)
        } else {
            ResetPolicy::adaptive(gamma)
        };
        let seed = derive_seed(master_seed, &[tag, t, n as u64, r as u64]);
        let h = sample_history(&resolved.chain, &policy, n, seed)?;
        members
            .iter()
            .map(|&i| {
                let spec = jobs[i].spec;
                let estimate = match spec.estimate(&h, &resolved.f) {
                    Ok(v) => Some(v),
                    Err(Error::InsufficientResets) => None,
                    Err(e) => return Err(e),
                };
                let row = ResultRow {
                    chain_name: resolved.chain.name.clone(),
                    alpha_or_params: resolved.params.clone(),
                    gamma,
                    estimator: spec.kind,
                    horizon: if spec.kind.is_fixed_horizon() {
                        spec.horizon
                    } else {
                        None
                    },
                    n,
                    seed_index: r,
                    estimate,
                    true_mean: resolved.true_mean,
                    abs_error: estimate.map(|e| (e - resolved.true_mean).abs()),
                };
                Ok((i, row))
            })
            .collect::<Result<Vec<_>>>()
    };

    let nested = in_pool(workers, || {
        units.par_iter().map(run_unit).collect::<Result<Vec<_>>>()
    })??;
    let mut rows: Vec<(usize, ResultRow)> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|(i, row)| (*i, row.seed_index));
    Ok(rows.into_iter().map(|(_, row)| row).collect())
}

fn mean_ci(errors: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if errors.is_empty() {
        return (None, None, None);
    }
    let k = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / k;
    let half = if errors.len() > 1 {
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
        1.96 * (var / k).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(mean - half), Some(mean + half))
}

/// Groups consecutive rows of the same (estimator, T, N) into summaries.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let head = &rows[start];
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| {
                    (r.estimator, r.horizon, r.n) == (head.estimator, head.horizon, head.n)
                })
                .count();
        let group = &rows[start..end];
        let errors: Vec<f64> = group.iter().filter_map(|r| r.abs_error).collect();
        let (mean_error, ci95_lo, ci95_hi) = mean_ci(&errors);
        out.push(SummaryRow {
            chain_name: head.chain_name.clone(),
            alpha_or_params: head.alpha_or_params.clone(),
            gamma: head.gamma,
            estimator: head.estimator,
            horizon: head.horizon,
            n: head.n,
            replications: group.len(),
            failures: group.len() - errors.len(),
            mean_error,
            ci95_lo,
            ci95_hi,
            bound_value: None,
        });
        start = end;
    }
    out
}

fn overlay(
    resolved: &ResolvedChain,
    gamma: f64,
    delta: f64,
    row: &SummaryRow,
) -> Result<Option<f64>> {
    let spec = EstimatorSpec::new(row.estimator, gamma, row.horizon)?;
    match estimator_bound(&resolved.chain, &resolved.f, &spec, row.n, delta) {
        Ok(b) => Ok(Some(b.value)),
        Err(
            e @ (Error::DegenerateBound(_)
            | Error::ZeroMassState { .. }
            | Error::NonUniqueStationary { .. }),
        ) => {
            warn!("no bound for {} at N={}: {e}", spec.label(), row.n);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Samples, estimates and summarizes every (estimator, N, replication).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let resolved = cfg.resolve()?;
    let mut jobs = Vec::new();
    for entry in &cfg.estimators {
        let spec = entry.spec(cfg.gamma)?;
        jobs.extend(cfg.budgets.iter().map(|&n| Job { spec, n }));
    }
    let results = run_jobs(
        &resolved,
        cfg.gamma,
        &jobs,
        cfg.replications,
        cfg.master_seed,
        cfg.workers,
    )?;
    let mut summary = summarize(&results);
    if let Some(delta) = cfg.delta {
        for row in &mut summary {
            row.bound_value = overlay(&resolved, cfg.gamma, delta, row)?;
        }
    }
    Ok(ExperimentOutput { results, summary })
}

/// Error of a fixed-horizon estimator at one `(T, N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub estimator: EstimatorKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// `T* = log √N / log(1/γ)`.
    pub t_star: f64,
    /// Whether `T` is the divisor of `N` closest to `⌈T*⌉`.
    pub is_optimal: bool,
    pub replications: usize,
    pub failures: usize,
    pub mean_error: Option<f64>,
    pub ci95_lo: Option<f64>,
    pub ci95_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub results: Vec<ResultRow>,
    pub summary: Vec<SweepRow>,
}

/// Divisor of `n` closest to `target`; ties go to the larger one.
fn nearest_divisor(n: usize, target: usize) -> usize {
    (1..=n)
        .filter(|d| n % d == 0)
        .min_by_key(|&d| (d.abs_diff(target), std::cmp::Reverse(d)))
        .unwrap_or(1)
}

/// Error curves of the configured FH estimators over the horizons in
/// `t_list`, plus the horizon nearest to `T*` for each budget.
pub fn sweep_horizon(cfg: &ExperimentConfig, t_list: &[usize]) -> Result<SweepOutput> {
    let mut kinds: Vec<EstimatorKind> = Vec::new();
    for e in &cfg.estimators {
        if !e.kind.is_fixed_horizon() {
            warn!("horizon sweep ignores {}", e.kind);
        } else if !kinds.contains(&e.kind) {
            kinds.push(e.kind);
        }
    }
    if kinds.is_empty() {
        return Err(Error::param("estimators", "horizon sweep needs FHN or FHC"));
    }
    if t_list.contains(&0) {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    let mut base = cfg.clone();
    base.estimators.retain(|e| e.kind.is_fixed_horizon());
    // Horizons come from `t_list`; T = 1 divides every budget.
    for e in &mut base.estimators {
        e.horizon = Some(1);
    }
    base.validate()?;
    for &t in t_list {
        if let Some(&n) = cfg.budgets.iter().find(|&&n| n % t != 0) {
            return Err(Error::IndivisibleBudget { n, horizon: t });
        }
    }
    let resolved = base.resolve()?;

    let mut jobs = Vec::new();
    let mut meta = Vec::new();
    for &kind in &kinds {
        for &n in &cfg.budgets {
            // γ = 0 sends T* to 0; the shortest horizon is then optimal.
            let (t_star, t_rounded) = if cfg.gamma == 0.0 {
                (0.0, 1)
            } else {
                let t = optimal_horizon(n.max(2), cfg.gamma)?;
                (t.value, t.rounded)
            };
            let t_opt = nearest_divisor(n, t_rounded);
            let mut ts: Vec<usize> = t_list.to_vec();
            ts.push(t_opt);
            ts.sort_unstable();
            ts.dedup();
            for t in ts {
                jobs.push(Job {
                    spec: EstimatorSpec::new(kind, cfg.gamma, Some(t))?,
                    n,
                });
                meta.push((t_star, t == t_opt));
            }
        }
    }
    let results = run_jobs(
        &resolved,
        cfg.gamma,
        &jobs,
        cfg.replications,
        cfg.master_seed,
        cfg.workers,
    )?;
    let summary = summarize(&results)
        .into_iter()
        .zip(meta)
        .map(|(s, (t_star, is_optimal))| SweepRow {
            estimator: s.estimator,
            n: s.n,
            horizon: s.horizon.unwrap_or(0),
            t_star,
            is_optimal,
            replications: s.replications,
            failures: s.failures,
            mean_error: s.mean_error,
            ci95_lo: s.ci95_lo,
            ci95_hi: s.ci95_hi,
        })
        .collect();
    Ok(SweepOutput { results, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CoverageStatus {
    Pass,
    Fail,
    Skip,
}

/// Empirical frequency of `abs_error ≥ bound(δ)` for one (estimator, N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub estimator: EstimatorKind,
    #[serde(rename = "T_or_NA", with = "na")]
    pub horizon: Option<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    pub replications: usize,
    pub exceedances: usize,
    pub rate: f64,
    /// `δ + 2√(δ(1−δ)/R)`.
    pub threshold: f64,
    pub bound: Option<f64>,
    pub status: CoverageStatus,
}

/// Runs the experiment and compares each error with its bound at `delta`.
///
/// Failed replications count as exceedances. Bounds that degenerate for
/// the configured parameters produce `SKIP` rows.
pub fn coverage_check(cfg: &ExperimentConfig, delta: f64) -> Result<Vec<CoverageRow>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("{delta} is not in (0, 1)")));
    }
    let mut cfg = cfg.clone();
    cfg.delta = None;
    cfg.validate()?;
    let resolved = cfg.resolve()?;
    let output = run_experiment(&cfg)?;
    let mut out = Vec::new();
    let mut rows = output.results.as_slice();
    for s in &output.summary {
        let (group, rest) = rows.split_at(s.replications);
        rows = rest;
        let r = s.replications as f64;
        let threshold = delta + 2.0 * (delta * (1.0 - delta) / r).sqrt();
        let spec = EstimatorSpec::new(s.estimator, cfg.gamma, s.horizon)?;
        let bound = match estimator_bound(&resolved.chain, &resolved.f, &spec, s.n, delta) {
            Ok(b) => Some(b.value),
            Err(Error::DegenerateBound(reason)) => {
                warn!("skipping {} at N={}: {reason}", spec.label(), s.n);
                None
            }
            Err(e) => return Err(e),
        };
        let (exceedances, rate, status) = match bound {
            Some(b) => {
                let k = group
                    .iter()
                    .filter(|row| row.abs_error.is_none_or(|e| e >= b))
                    .count();
                let rate = k as f64 / r;
                let status = if rate <= threshold {
                    CoverageStatus::Pass
                } else {
                    CoverageStatus::Fail
                };
                (k, rate, status)
            }
            None => (0, 0.0, CoverageStatus::Skip),
        };
        out.push(CoverageRow {
            estimator: s.estimator,
            horizon: s.horizon,
            n: s.n,
            replications: s.replications,
            exceedances,
            rate,
            threshold,
            bound,
            status,
        });
    }
    Ok(out)
}

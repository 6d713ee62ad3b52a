//! Reset-policy sampling.
//!
//! At every step `t` a reset decision `Y_t` is taken; if `Y_t = 1` the next
//! state is drawn from `ν`, otherwise from `P(· | X_t)`. The states between
//! two resets form a trajectory. With `N` collected states only the
//! decisions `Y_0 .. Y_{N−2}` influence what is observed, so the sampler
//! never fires a reset on the last step (`Y_{N−1} = 0`). Under the
//! adaptive policy this makes `M − 1 ~ Bin(N − 1, 1 − γ)`.
//!
//! None of the provided policies looks at the history, so the sampler first
//! plans the horizons `T_1 .. T_M` and then simulates each trajectory from
//! its own random stream (see [`crate::rng`]). Serial and parallel
//! collection therefore produce byte-identical histories.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{check_gamma, ChainInstance};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, trajectory_rng, RESET_STREAM};

/// Rule deciding when the chain is restarted from `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResetPolicy {
    /// Reset after every `horizon` collected states.
    FixedHorizon { horizon: usize },
    /// Reset with probability `1 − γ` at every step.
    AdaptiveHorizon { gamma: f64 },
    /// Never reset.
    Never,
    /// Reset exactly after the listed steps.
    Schedule { resets: BTreeSet<usize> },
}

impl ResetPolicy {
    pub fn fixed(horizon: usize) -> Self {
        ResetPolicy::FixedHorizon { horizon }
    }

    pub fn adaptive(gamma: f64) -> Self {
        ResetPolicy::AdaptiveHorizon { gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ResetPolicy::FixedHorizon { horizon: 0 } => {
                Err(Error::param("horizon", "fixed horizon must be at least 1"))
            }
            ResetPolicy::AdaptiveHorizon { gamma } => check_gamma(*gamma),
            _ => Ok(()),
        }
    }

    /// Short label such as `FHR(T=10)` or `AHR(gamma=0.9)`.
    pub fn descriptor(&self) -> String {
        match self {
            ResetPolicy::FixedHorizon { horizon } => format!("FHR(T={horizon})"),
            ResetPolicy::AdaptiveHorizon { gamma } => format!("AHR(gamma={gamma})"),
            ResetPolicy::Never => "never".to_string(),
            ResetPolicy::Schedule { resets } => format!("schedule({} resets)", resets.len()),
        }
    }

    /// Trajectory horizons for a budget of `n` states; they sum to `n`.
    pub fn plan_horizons(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::param("n", "budget must be at least 1"));
        }
        Ok(match self {
            ResetPolicy::FixedHorizon { horizon } => {
                let mut out = vec![*horizon; n / horizon];
                if n % horizon != 0 {
                    out.push(n % horizon);
                }
                out
            }
            ResetPolicy::AdaptiveHorizon { gamma } => plan_parallel_horizons(*gamma, n, seed)?,
            ResetPolicy::Never => vec![n],
            ResetPolicy::Schedule { resets } => {
                let mut out = Vec::new();
                let mut start = 0;
                for &t in resets.range(..n - 1) {
                    out.push(t + 1 - start);
                    start = t + 1;
                }
                out.push(n - start);
                out
            }
        })
    }
}

/// Draws the horizons of an adaptive-reset run ahead of time.
///
/// `T_i − 1 ~ Geo(1 − γ)` is drawn from the reset stream until the budget is
/// exhausted; the last horizon is truncated so that `Σ T_i = n`.
pub fn plan_parallel_horizons(gamma: f64, n: usize, seed: u64) -> Result<Vec<usize>> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::param("n", "budget must be at least 1"));
    }
    if gamma == 1.0 {
        return Ok(vec![n]);
    }
    let geo = Geometric::new(1.0 - gamma).map_err(|e| Error::param("gamma", e.to_string()))?;
    let mut rng = stream_rng(seed, RESET_STREAM);
    let mut horizons = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let failures = geo.sample(&mut rng);
        let horizon = usize::try_from(failures)
            .unwrap_or(usize::MAX)
            .saturating_add(1);
        let horizon = horizon.min(remaining);
        horizons.push(horizon);
        remaining -= horizon;
    }
    Ok(horizons)
}

/// States and reset decisions `(X_t, Y_t)` for `t < N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub states: Vec<usize>,
    pub resets: Vec<bool>,
    pub master_seed: Option<u64>,
    pub policy: Option<ResetPolicy>,
}

impl History {
    pub fn new(states: Vec<usize>, resets: Vec<bool>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::param("history", "must contain at least one state"));
        }
        if states.len() != resets.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                got: resets.len(),
            });
        }
        Ok(Self {
            states,
            resets,
            master_seed: None,
            policy: None,
        })
    }

    /// `N`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `Σ_t Y_t`.
    pub fn reset_count(&self) -> usize {
        self.resets.iter().filter(|&&y| y).count()
    }

    /// `M = 1 + Σ_t Y_t`.
    pub fn trajectory_count(&self) -> usize {
        1 + self.reset_count()
    }

    /// Fails if a state index is out of range for `chain`.
    pub fn check_against(&self, chain: &ChainInstance) -> Result<()> {
        match self.states.iter().find(|&&x| x >= chain.n()) {
            Some(&x) => Err(Error::param(
                "history",
                format!("state {x} out of range 0..{}", chain.n()),
            )),
            None => Ok(()),
        }
    }
}

/// Precomputed categorical samplers for `ν` and each row of `P`.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    init: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
}

impl ChainSampler {
    pub fn new(chain: &ChainInstance) -> Result<Self> {
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w.iter().copied())
                .map_err(|e| Error::InvalidDistribution(e.to_string()))
        };
        Ok(Self {
            init: weighted(chain.init.probs())?,
            rows: (0..chain.n())
                .map(|x| weighted(&chain.kernel.row(x)))
                .collect::<Result<_>>()?,
        })
    }

    /// Trajectory `index` of length `len`: `X ~ ν`, then `len − 1` moves of `P`.
    pub fn trajectory(&self, seed: u64, index: usize, len: usize) -> Vec<usize> {
        let mut rng = trajectory_rng(seed, index);
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut x = self.init.sample(&mut rng);
        out.push(x);
        for _ in 1..len {
            x = self.rows[x].sample(&mut rng);
            out.push(x);
        }
        out
    }
}

fn assemble(trajectories: Vec<Vec<usize>>, n: usize, seed: u64, policy: &ResetPolicy) -> History {
    let mut states = Vec::with_capacity(n);
    let mut resets = Vec::with_capacity(n);
    let last = trajectories.len().saturating_sub(1);
    for (i, traj) in trajectories.into_iter().enumerate() {
        let len = traj.len();
        states.extend(traj);
        resets.extend((0..len).map(|k| i < last && k + 1 == len));
    }
    History {
        states,
        resets,
        master_seed: Some(seed),
        policy: Some(policy.clone()),
    }
}

/// Runs the reset-augmented sampler for `n` steps on a single thread.
pub fn sample_history(
    chain: &ChainInstance,
    policy: &ResetPolicy,
    n: usize,
    seed: u64,
) -> Result<History> {
    let sampler = ChainSampler::new(chain)?;
    let horizons = policy.plan_horizons(n, seed)?;
    let trajectories = horizons
        .iter()
        .enumerate()
        .map(|(i, &len)| sampler.trajectory(seed, i, len))
        .collect();
    Ok(assemble(trajectories, n, seed, policy))
}

/// Same output as [`sample_history`], with trajectories simulated on the
/// rayon pool.
pub fn sample_history_parallel(
    chain: &ChainInstance,
    policy: &ResetPolicy,
    n: usize,
    seed: u64,
) -> Result<History> {
    let sampler = ChainSampler::new(chain)?;
    let horizons = policy.plan_horizons(n, seed)?;
    let trajectories = horizons
        .par_iter()
        .enumerate()
        .map(|(i, &len)| sampler.trajectory(seed, i, len))
        .collect();
    Ok(assemble(trajectories, n, seed, policy))
}

/// Reset instants `τ_1 .. τ_{M+1}` and horizons `T_i = τ_{i+1} − τ_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySegmentation {
    pub tau: Vec<usize>,
    pub horizons: Vec<usize>,
    pub count: usize,
}

/// `τ_1 = 0`, `τ_i = 1 + min{t ≥ τ_{i−1} : Y_t = 1}`, `τ_{M+1} = N`.
///
/// A reset on the final step yields a trailing trajectory with horizon 0.
pub fn segment_trajectories(h: &History) -> TrajectorySegmentation {
    let n = h.len();
    let mut tau = vec![0];
    tau.extend(
        h.resets
            .iter()
            .enumerate()
            .filter(|(_, &y)| y)
            .map(|(t, _)| t + 1),
    );
    tau.push(n);
    let horizons: Vec<usize> = tau.windows(2).map(|w| w[1] - w[0]).collect();
    let count = horizons.len();
    TrajectorySegmentation {
        tau,
        horizons,
        count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub count: usize,
    pub max_horizon: usize,
    pub mean_horizon: f64,
}

pub fn trajectory_stats(seg: &TrajectorySegmentation) -> TrajectoryStats {
    let total: usize = seg.horizons.iter().sum();
    TrajectoryStats {
        count: seg.count,
        max_horizon: seg.horizons.iter().copied().max().unwrap_or(0),
        mean_horizon: total as f64 / seg.count as f64,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    x: usize,
    y: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct HistoryMeta {
    master_seed: Option<u64>,
    policy: Option<ResetPolicy>,
    n: usize,
}

/// Writes `t,x,y` rows with a header.
pub fn write_history_csv<W: Write>(h: &History, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for (t, (&x, &y)) in h.states.iter().zip(&h.resets).enumerate() {
        w.serialize(StepRecord { t, x, y: y as u8 })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv<R: Read>(input: R) -> Result<History> {
    let mut r = csv::Reader::from_reader(input);
    let mut states = Vec::new();
    let mut resets = Vec::new();
    for (i, rec) in r.deserialize::<StepRecord>().enumerate() {
        let rec = rec?;
        if rec.t != i {
            return Err(Error::param(
                "history",
                format!("row {i} has t = {}", rec.t),
            ));
        }
        states.push(rec.x);
        resets.push(rec.y != 0);
    }
    History::new(states, resets)
}

/// JSON lines: one metadata object, then one `{"t","x","y"}` object per step.
pub fn write_history_jsonl<W: Write>(h: &History, mut out: W) -> Result<()> {
    let meta = HistoryMeta {
        master_seed: h.master_seed,
        policy: h.policy.clone(),
        n: h.len(),
    };
    serde_json::to_writer(&mut out, &meta)?;
    out.write_all(b"\n")?;
    for (t, (&x, &y)) in h.states.iter().zip(&h.resets).enumerate() {
        serde_json::to_writer(&mut out, &StepRecord { t, x, y: y as u8 })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history_jsonl<R: Read>(input: R) -> Result<History> {
    let mut lines = BufReader::new(input).lines();
    let meta: HistoryMeta = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::param("history", "empty file")),
    };
    let mut states = Vec::with_capacity(meta.n);
    let mut resets = Vec::with_capacity(meta.n);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)?;
        states.push(rec.x);
        resets.push(rec.y != 0);
    }
    let mut h = History::new(states, resets)?;
    h.master_seed = meta.master_seed;
    h.policy = meta.policy;
    Ok(h)
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "ndjson")
    )
}

/// Saves as JSON lines for `.jsonl`/`.ndjson`, CSV otherwise.
pub fn save_history(h: &History, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let out = BufWriter::new(File::create(path)?);
    if is_jsonl(path) {
        write_history_jsonl(h, out)
    } else {
        write_history_csv(h, out)
    }
}

pub fn load_history(path: impl AsRef<Path>) -> Result<History> {
    let path = path.as_ref();
    let input = File::open(path)?;
    if is_jsonl(path) {
        read_history_jsonl(input)
    } else {
        read_history_csv(input)
    }
}

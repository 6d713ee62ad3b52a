//! Chain generators: the two-state hard instances, the lazy cycle family
//! used in the numerical study, and random chains.

use rand_distr::{Distribution as _, Exp1};
use serde::Serialize;

use crate::chain::{check_gamma, ChainInstance, Distribution, Kernel, StateFunction};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Two-state chain on which `π_γ f₊ = ε` and `π_γ f₋ = −ε` are hard to
/// tell apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardInstance {
    #[serde(skip)]
    pub chain: ChainInstance,
    #[serde(skip)]
    pub f_plus: StateFunction,
    #[serde(skip)]
    pub f_minus: StateFunction,
    pub epsilon: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `π_γ f₊`; equals `ε`.
    pub target_mean: f64,
}

/// Kernel `[[p+β, 1−p−β], [p, 1−p]]`, `ν = (q, 1−q)`, `f₊ = (1, 0)`,
/// `f₋ = (−1, 0)`, with `p = ε(1−βγ)` and `q` solving
/// `((1−γ)q + γp) / (1−βγ) = ε`.
pub fn two_state_hard_instance(beta: f64, gamma: f64, epsilon: f64) -> Result<HardInstance> {
    if !(beta.is_finite() && (0.0..1.0).contains(&beta)) {
        return Err(Error::param("beta", format!("{beta} is not in [0, 1)")));
    }
    check_gamma(gamma)?;
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::param(
            "epsilon",
            format!("{epsilon} must be nonnegative"),
        ));
    }
    let gap = 1.0 - beta * gamma;
    let limit = (1.0 - beta) / gap;
    if epsilon > limit {
        return Err(Error::OutOfRegime { epsilon, limit });
    }
    let p = epsilon * gap;
    let q = if gamma < 1.0 {
        (epsilon * gap - gamma * p) / (1.0 - gamma)
    } else {
        p
    };
    if !(p > 0.0 && p < 1.0 - beta) {
        return Err(Error::DegenerateParam {
            name: "p",
            value: p,
        });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DegenerateParam {
            name: "q",
            value: q,
        });
    }
    let kernel = Kernel::new(vec![vec![p + beta, 1.0 - p - beta], vec![p, 1.0 - p]])?;
    let init = Distribution::new(vec![q, 1.0 - q])?;
    let name = format!("hard(beta={beta},gamma={gamma},epsilon={epsilon})");
    Ok(HardInstance {
        chain: ChainInstance::new(name, kernel, init)?,
        f_plus: StateFunction::with_range(vec![1.0, 0.0], 0.0, 1.0)?,
        f_minus: StateFunction::new(vec![-1.0, 0.0]),
        epsilon,
        p,
        q,
        beta,
        gamma,
        target_mean: epsilon,
    })
}

/// Symmetric two-state chain `[[(1+β)/2, (1−β)/2], [(1−β)/2, (1+β)/2]]`
/// started uniformly.
pub fn no_mixing_instance(beta: f64) -> Result<ChainInstance> {
    if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
        return Err(Error::param("beta", format!("{beta} is not in [0, 1]")));
    }
    let stay = (1.0 + beta) / 2.0;
    let kernel = Kernel::new(vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]])?;
    ChainInstance::new(
        format!("nomix(beta={beta})"),
        kernel,
        Distribution::uniform(2),
    )
}

/// Lazy cycle `αI + (1−α)C` on `n` states, started uniformly, with
/// `f = (1, −1, 2)` repeated along the cycle.
pub fn alpha_cycle_chain(alpha: f64, n: usize) -> Result<(ChainInstance, StateFunction)> {
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::param("alpha", format!("{alpha} is not in [0, 1]")));
    }
    if n == 0 {
        return Err(Error::param("n", "need at least one state"));
    }
    let rows = (0..n)
        .map(|x| {
            let mut row = vec![0.0; n];
            row[x] += alpha;
            row[(x + 1) % n] += 1.0 - alpha;
            row
        })
        .collect();
    let chain = ChainInstance::new(
        format!("alpha_cycle(alpha={alpha},n={n})"),
        Kernel::new(rows)?,
        Distribution::uniform(n),
    )?;
    let f = StateFunction::new((0..n).map(|x| [1.0, -1.0, 2.0][x % 3]).collect());
    Ok((chain, f))
}

/// Random chain with rows and `ν` drawn uniformly from the simplex.
///
/// Entries below `min_entry` are raised to it before the row is
/// renormalized, so any `min_entry > 0` yields an ergodic chain.
pub fn random_chain(n: usize, seed: u64, min_entry: f64) -> Result<ChainInstance> {
    if n == 0 {
        return Err(Error::param("n", "need at least one state"));
    }
    if !(min_entry.is_finite() && (0.0..=1.0 / n as f64).contains(&min_entry)) {
        return Err(Error::param(
            "min_entry",
            format!("{min_entry} is not in [0, 1/n]"),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    let mut simplex = |floor: f64| {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let floored: Vec<f64> = raw.iter().map(|v| (v / total).max(floor)).collect();
        let total: f64 = floored.iter().sum();
        floored.into_iter().map(|v| v / total).collect::<Vec<f64>>()
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|_| simplex(min_entry)).collect();
    let init = simplex(0.0);
    ChainInstance::new(
        format!("random(n={n},seed={seed})"),
        Kernel::new(rows)?,
        Distribution::new(init)?,
    )
}

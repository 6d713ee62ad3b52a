//! The fixed-horizon (FHN, FHC) and adaptive-horizon (OS, AS) estimators of
//! `π_γ f`, plus exact expectations used to measure their bias.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::chain::{check_gamma, discounted_kernel, ChainInstance, StateFunction};
use crate::error::{Error, Result};
use crate::sampling::{History, ResetPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimatorKind {
    Fhn,
    Fhc,
    Os,
    As,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Fhn,
        EstimatorKind::Fhc,
        EstimatorKind::Os,
        EstimatorKind::As,
    ];

    pub fn is_fixed_horizon(self) -> bool {
        matches!(self, EstimatorKind::Fhn | EstimatorKind::Fhc)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Fhn => "FHN",
            EstimatorKind::Fhc => "FHC",
            EstimatorKind::Os => "OS",
            EstimatorKind::As => "AS",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FHN" => Ok(EstimatorKind::Fhn),
            "FHC" => Ok(EstimatorKind::Fhc),
            "OS" => Ok(EstimatorKind::Os),
            "AS" => Ok(EstimatorKind::As),
            _ => Err(Error::param(
                "estimator",
                format!("unknown estimator `{s}`"),
            )),
        }
    }
}

/// An estimator together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub gamma: f64,
    /// Trajectory length `T`; required for FHN and FHC.
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, gamma: f64, horizon: Option<usize>) -> Result<Self> {
        let spec = Self {
            kind,
            gamma,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.kind.is_fixed_horizon() {
            match self.horizon {
                None | Some(0) => {
                    return Err(Error::param(
                        "horizon",
                        format!("{} needs T >= 1", self.kind),
                    ))
                }
                Some(t) if self.kind == EstimatorKind::Fhc => check_fhc(self.gamma, t)?,
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn horizon_or_err(&self) -> Result<usize> {
        self.horizon
            .ok_or_else(|| Error::param("horizon", format!("{} needs T >= 1", self.kind)))
    }

    /// Reset policy the estimator's guarantees are stated for.
    pub fn policy(&self) -> Result<ResetPolicy> {
        Ok(if self.kind.is_fixed_horizon() {
            ResetPolicy::fixed(self.horizon_or_err()?)
        } else {
            ResetPolicy::adaptive(self.gamma)
        })
    }

    /// `K` in `estimate(f + c) = estimate(f) + c·K`.
    pub fn mass(&self) -> f64 {
        match (self.kind, self.horizon) {
            (EstimatorKind::Fhn, Some(t)) => 1.0 - self.gamma.powi(t as i32),
            _ => 1.0,
        }
    }

    /// Label such as `FHC(T=100)` or `AS`.
    pub fn label(&self) -> String {
        match self.horizon {
            Some(t) if self.kind.is_fixed_horizon() => format!("{}(T={t})", self.kind),
            _ => self.kind.to_string(),
        }
    }

    /// Applies the estimator; warns when the history came from another policy.
    pub fn estimate(&self, h: &History, f: &StateFunction) -> Result<f64> {
        self.validate()?;
        if let Some(p) = &h.policy {
            let expected = self.policy()?;
            if *p != expected {
                warn!(
                    "{} applied to a history sampled under {} instead of {}",
                    self.label(),
                    p.descriptor(),
                    expected.descriptor()
                );
            }
        }
        match self.kind {
            EstimatorKind::Fhn => estimate_fhn(h, f, self.gamma, self.horizon_or_err()?),
            EstimatorKind::Fhc => estimate_fhc(h, f, self.gamma, self.horizon_or_err()?),
            EstimatorKind::Os => estimate_os(h, f),
            EstimatorKind::As => estimate_as(h, f),
        }
    }
}

fn check_fhc(gamma: f64, horizon: usize) -> Result<()> {
    if gamma.powi(horizon as i32) >= 1.0 {
        return Err(Error::param("gamma", "FHC needs gamma^T < 1"));
    }
    Ok(())
}

fn check_history(h: &History, f: &StateFunction) -> Result<()> {
    if h.is_empty() {
        return Err(Error::param("history", "must contain at least one state"));
    }
    if let Some(&x) = h.states.iter().find(|&&x| x >= f.len()) {
        return Err(Error::param(
            "history",
            format!("state {x} out of range 0..{}", f.len()),
        ));
    }
    Ok(())
}

/// `(1/M) Σ_i (1−γ) Σ_{j<T} γʲ f(X_{Ti+j})` with `M = N/T`.
pub fn estimate_fhn(h: &History, f: &StateFunction, gamma: f64, horizon: usize) -> Result<f64> {
    check_gamma(gamma)?;
    check_history(h, f)?;
    if horizon == 0 {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    let n = h.len();
    if n % horizon != 0 {
        return Err(Error::IndivisibleBudget { n, horizon });
    }
    let weights: Vec<f64> = (0..horizon).map(|j| gamma.powi(j as i32)).collect();
    let values = f.values();
    let total: f64 = h
        .states
        .chunks_exact(horizon)
        .map(|traj| {
            traj.iter()
                .zip(&weights)
                .map(|(&x, w)| w * values[x])
                .sum::<f64>()
        })
        .sum();
    let m = (n / horizon) as f64;
    Ok((1.0 - gamma) * total / m)
}

/// FHN rescaled by `1/(1−γᵀ)`.
pub fn estimate_fhc(h: &History, f: &StateFunction, gamma: f64, horizon: usize) -> Result<f64> {
    check_gamma(gamma)?;
    check_fhc(gamma, horizon.max(1))?;
    let fhn = estimate_fhn(h, f, gamma, horizon)?;
    Ok(fhn / (1.0 - gamma.powi(horizon as i32)))
}

/// `(1/(M−1)) Σ_t Y_t f(X_t)`: the mean of `f` over pre-reset states.
pub fn estimate_os(h: &History, f: &StateFunction) -> Result<f64> {
    check_history(h, f)?;
    let values = f.values();
    let (count, total) = h
        .states
        .iter()
        .zip(&h.resets)
        .filter(|(_, &y)| y)
        .fold((0usize, 0.0), |(c, s), (&x, _)| (c + 1, s + values[x]));
    if count == 0 {
        return Err(Error::InsufficientResets);
    }
    Ok(total / count as f64)
}

/// `(1/N) Σ_t f(X_t)`.
pub fn estimate_as(h: &History, f: &StateFunction) -> Result<f64> {
    check_history(h, f)?;
    let values = f.values();
    Ok(h.states.iter().map(|&x| values[x]).sum::<f64>() / h.len() as f64)
}

/// Exact `E[η̂]` of FHN or FHC: `c · Σ_{t<T} γᵗ νPᵗf`.
pub fn exact_fh_expectation(
    chain: &ChainInstance,
    gamma: f64,
    horizon: usize,
    f: &StateFunction,
    variant: EstimatorKind,
) -> Result<f64> {
    check_gamma(gamma)?;
    chain.check_function(f)?;
    if horizon == 0 {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    let scale = match variant {
        EstimatorKind::Fhn => 1.0 - gamma,
        EstimatorKind::Fhc => {
            check_fhc(gamma, horizon)?;
            (1.0 - gamma) / (1.0 - gamma.powi(horizon as i32))
        }
        other => {
            return Err(Error::param(
                "variant",
                format!("{other} is not a fixed-horizon estimator"),
            ))
        }
    };
    let mut mu = chain.init.probs().to_vec();
    let mut weight = 1.0;
    let mut total = 0.0;
    for t in 0..horizon {
        if t > 0 {
            mu = chain.kernel.push_forward(&mu);
            weight *= gamma;
        }
        total += weight * dot(&mu, f.values());
    }
    Ok(scale * total)
}

/// Exact `E[η̂_AS] = (1/N) Σ_{t<N} νP_γᵗ f` under adaptive resets.
pub fn exact_as_expectation(
    chain: &ChainInstance,
    gamma: f64,
    n: usize,
    f: &StateFunction,
) -> Result<f64> {
    chain.check_function(f)?;
    if n == 0 {
        return Err(Error::param("n", "budget must be at least 1"));
    }
    let pg = discounted_kernel(chain, gamma)?;
    let mut mu = chain.init.probs().to_vec();
    let mut total = 0.0;
    for t in 0..n {
        if t > 0 {
            mu = pg.push_forward(&mu);
        }
        total += dot(&mu, f.values());
    }
    Ok(total / n as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

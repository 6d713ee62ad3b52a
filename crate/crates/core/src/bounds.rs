//! Closed-form bias, concentration, complexity and lower bounds.
//!
//! Unless noted otherwise the bounds assume `f` takes values in `[0, 1]`.
//! [`estimator_bound`] evaluates them on a concrete chain and rescales for
//! functions with a wider range.

use serde::{Serialize, Serializer};

use crate::chain::{
    check_gamma, chi2_along_chain, chi_square_divergence, discounted_distribution,
    spectral_gap_with, stationary_distribution, ChainInstance, StateFunction,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};

/// A minimizing index that may be the limit point `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    Finite(usize),
    Infinite,
}

impl Serialize for Index {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Index::Finite(k) => s.serialize_u64(*k as u64),
            Index::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Minimizers {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<Index>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j0: Option<usize>,
}

/// Inputs echoed alongside a bound value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// `χ₂(ν‖π)` or `χ₂(ν‖π_γ)`, depending on the bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2_sigma2: Option<f64>,
    /// `(lo, width)` when `f` was mapped onto `[0, 1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescaled: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound: String,
    pub value: f64,
    /// Bias part of a concentration bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    pub minimizers: Minimizers,
    pub inputs: BoundInputs,
}

/// `Σ_{k=a}^{b−1} xᵏ`, stable at `x = 1`.
fn geo_sum(x: f64, a: usize, b: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    if (1.0 - x).abs() < 1e-12 {
        return (b - a) as f64;
    }
    (x.powi(a as i32) - x.powi(b as i32)) / (1.0 - x)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::param("beta", format!("{beta} is not in [0, 1]")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::param("delta", format!("{delta} is not in (0, 1)")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "budget must be at least 1"));
    }
    Ok(())
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("{v} must be finite and nonnegative"),
        ))
    }
}

/// Bias bound of FHN for `f ∈ [0, 1]`: `γᵀ`.
pub fn fhn_bias_bound(gamma: f64, horizon: usize) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(gamma.powi(horizon as i32))
}

/// Bias bound of FHC, minimized over `t₀ ∈ ⟦0, T⟧` and `s₀ ∈ ℕ ∪ {∞}`.
///
/// The objective splits into a `t₀` part and an `s₀` part, so each is
/// minimized on its own. The `s₀` search stops at `10T + 100` and also
/// evaluates the limit `s₀ → ∞`.
///
/// This bound does not hold when `β < 1` and `ν` is far from `π`: the
/// `t₀` head lacks the `1/(1 − γᵀ)` factor carried by the rest of the
/// in-horizon sum. See [`fhc_bias_bound_corrected`].
pub fn fhc_bias_bound(
    beta: f64,
    gamma: f64,
    horizon: usize,
    chi2_sigma2: f64,
) -> Result<BoundReport> {
    fhc_bias(beta, gamma, horizon, chi2_sigma2, false)
}

/// [`fhc_bias_bound`] with the head `1 − γ^{t₀}` divided by `1 − γᵀ`.
///
/// At `β = 0` this is `(1 − γ)γᵀ/(1 − γᵀ) · min{√(χ²σ²), 1}`, which is
/// attained at `T = 1` by `ν = δ₀`, `f = 1{0}`.
pub fn fhc_bias_bound_corrected(
    beta: f64,
    gamma: f64,
    horizon: usize,
    chi2_sigma2: f64,
) -> Result<BoundReport> {
    fhc_bias(beta, gamma, horizon, chi2_sigma2, true)
}

fn fhc_bias(
    beta: f64,
    gamma: f64,
    horizon: usize,
    chi2_sigma2: f64,
    corrected: bool,
) -> Result<BoundReport> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_nonneg("chi2_sigma2", chi2_sigma2)?;
    if horizon == 0 {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    let gt = gamma.powi(horizon as i32);
    if gt >= 1.0 {
        return Err(Error::DegenerateBound("FHC needs gamma^T < 1".into()));
    }
    let r = chi2_sigma2.sqrt();
    let bg = beta * gamma;
    let bt = beta.powi(horizon as i32);
    let head_scale = if corrected { 1.0 / (1.0 - gt) } else { 1.0 };
    // Both parts are multiplied through by (1 − γ).
    let t_part = |t0: usize| {
        let spread = (1.0 - gamma) * geo_sum(bg, t0, horizon) / (1.0 - gt);
        (1.0 - gamma.powi(t0 as i32)) * head_scale + spread * r
    };
    let s_part = |s0: Index| match s0 {
        Index::Finite(s) => {
            (1.0 - gamma.powi(s as i32)) + (1.0 - gamma) * bg.powi(s as i32) * bt / (1.0 - bg) * r
        }
        Index::Infinite => 1.0,
    };
    let (t0, t_best) = (0..=horizon)
        .map(|t0| (t0, t_part(t0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty range");
    let s_max = 10 * horizon + 100;
    let (s0, s_best) = (0..=s_max)
        .map(Index::Finite)
        .chain(std::iter::once(Index::Infinite))
        .map(|s0| (s0, s_part(s0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty range");
    Ok(BoundReport {
        bound: if corrected {
            "fhc_bias_corrected"
        } else {
            "fhc_bias"
        }
        .into(),
        value: (gt * (t_best + s_best)).max(0.0),
        bias: None,
        minimizers: Minimizers {
            t0: Some(t0),
            s0: Some(s0),
            j0: None,
        },
        inputs: BoundInputs {
            gamma: Some(gamma),
            beta: Some(beta),
            horizon: Some(horizon),
            chi2_sigma2: Some(chi2_sigma2),
            ..Default::default()
        },
    })
}

/// Deviation bound for FHN/FHC holding with probability `1 − δ`.
///
/// `chi2_table[j]` must hold `χ₂(νPʲ‖π)` for `j = 0..=T`. The result is the
/// bias bound plus `scale · min_{j₀} (c(j₀) + d(j₀, δ))`, where `j₀` values
/// with an infinite term (`β = 1`, `j₀ < T`) are skipped.
#[allow(clippy::too_many_arguments)]
pub fn fh_concentration_bound(
    variant: EstimatorKind,
    beta: f64,
    gamma: f64,
    horizon: usize,
    n: usize,
    delta: f64,
    chi2_table: &[f64],
    chi2_sigma2: f64,
) -> Result<BoundReport> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_delta(delta)?;
    check_n(n)?;
    check_nonneg("chi2_sigma2", chi2_sigma2)?;
    if horizon == 0 {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    if n % horizon != 0 {
        return Err(Error::IndivisibleBudget { n, horizon });
    }
    if chi2_table.len() <= horizon {
        return Err(Error::DimensionMismatch {
            expected: horizon + 1,
            got: chi2_table.len(),
        });
    }
    let gt = gamma.powi(horizon as i32);
    let (bias, scale, t0, s0) = match variant {
        EstimatorKind::Fhn => (gt, 1.0 - gamma, None, None),
        EstimatorKind::Fhc => {
            let b = fhc_bias_bound(beta, gamma, horizon, chi2_sigma2)?;
            (
                b.value,
                (1.0 - gamma) / (1.0 - gt),
                b.minimizers.t0,
                b.minimizers.s0,
            )
        }
        other => {
            return Err(Error::param(
                "variant",
                format!("{other} is not a fixed-horizon estimator"),
            ))
        }
    };
    let r = chi2_sigma2.sqrt();
    let bg = beta * gamma;
    let log_term = 4.0 * (2.0 / delta).ln();
    let term = |j0: usize| -> Option<f64> {
        let tail = geo_sum(gamma * gamma, j0, horizon);
        let mixing = if tail == 0.0 {
            0.0
        } else if beta >= 1.0 {
            return None;
        } else {
            (1.0 + beta) * tail / (1.0 - beta)
        };
        let head = geo_sum(gamma, 0, j0);
        let chi2 = chi2_table[j0];
        let d = (8.0 * horizon as f64 * ((chi2 + 1.0).ln() + log_term) / n as f64).sqrt()
            * (head * head + mixing).sqrt();
        let c = geo_sum(bg, j0, horizon) * r;
        Some(c + d)
    };
    let (j0, best) = (0..=horizon)
        .filter_map(|j0| term(j0).map(|v| (j0, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::DegenerateBound("no finite j0 term".into()))?;
    Ok(BoundReport {
        bound: format!("{}_concentration", variant.to_string().to_lowercase()),
        value: bias + scale * best,
        bias: Some(bias),
        minimizers: Minimizers {
            t0,
            s0,
            j0: Some(j0),
        },
        inputs: BoundInputs {
            n: Some(n),
            gamma: Some(gamma),
            beta: Some(beta),
            delta: Some(delta),
            horizon: Some(horizon),
            chi2: Some(chi2_table[0]),
            chi2_sigma2: Some(chi2_sigma2),
            rescaled: None,
        },
    })
}

/// OS deviation bound `√(2 log(8/δ) / (N(1−γ)))`.
pub fn os_concentration_bound(n: usize, gamma: f64, delta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_delta(delta)?;
    check_n(n)?;
    if gamma >= 1.0 {
        return Err(Error::DegenerateBound(
            "OS guarantee vanishes at gamma = 1".into(),
        ));
    }
    Ok((2.0 * (8.0 / delta).ln() / (n as f64 * (1.0 - gamma))).sqrt())
}

/// AS deviation bound `√((8 log(2/δ) + 4 log(χ₂(ν‖π_γ)+1)) / (N(1−βγ)))`.
pub fn as_concentration_bound(
    n: usize,
    beta: f64,
    gamma: f64,
    delta: f64,
    chi2: f64,
) -> Result<f64> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_delta(delta)?;
    check_n(n)?;
    check_nonneg("chi2", chi2)?;
    let gap = 1.0 - beta * gamma;
    if gap <= 0.0 {
        return Err(Error::DegenerateBound(
            "AS guarantee needs beta*gamma < 1".into(),
        ));
    }
    Ok(((8.0 * (2.0 / delta).ln() + 4.0 * (chi2 + 1.0).ln()) / (n as f64 * gap)).sqrt())
}

/// AS bias bound `(1−(βγ)ᴺ) / (N(1−βγ)) · √(χ₂(ν‖π_γ) σ²_γ f)`.
pub fn as_bias_bound(n: usize, beta: f64, gamma: f64, chi2_sigma2_gamma: f64) -> Result<f64> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_n(n)?;
    check_nonneg("chi2_sigma2_gamma", chi2_sigma2_gamma)?;
    let bg = beta * gamma;
    if bg >= 1.0 {
        return Err(Error::DegenerateBound(
            "AS bias bound needs beta*gamma < 1".into(),
        ));
    }
    Ok(
        (1.0 - bg.powi(n.min(i32::MAX as usize) as i32)) / (n as f64 * (1.0 - bg))
            * chi2_sigma2_gamma.sqrt(),
    )
}

/// Minimax lower bound with its validity regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    /// `√(σ²_γ f · log(1/(2δ)) / (N(1−βγ)))`.
    pub value: f64,
    /// `√(σ²_γ f · log(1/(2δ)) / N)`, the other branch of the case split.
    pub alternate: f64,
    /// Whether `δ` lies below [`LowerBound::threshold`].
    pub high_confidence: bool,
    /// `½ exp(−N(1−β)² / (σ²_γ f (1−βγ)))`.
    pub threshold: f64,
}

impl LowerBound {
    /// `value` inside the high-confidence regime, `alternate` outside it.
    pub fn applicable(&self) -> f64 {
        if self.high_confidence {
            self.value
        } else {
            self.alternate
        }
    }
}

pub fn minimax_lower_bound(
    n: usize,
    beta: f64,
    gamma: f64,
    delta: f64,
    sigma2_gamma_f: f64,
) -> Result<LowerBound> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_n(n)?;
    check_nonneg("sigma2_gamma_f", sigma2_gamma_f)?;
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::param("delta", format!("{delta} is not in (0, 1/2)")));
    }
    let gap = 1.0 - beta * gamma;
    if gap <= 0.0 {
        return Err(Error::DegenerateBound(
            "lower bound needs beta*gamma < 1".into(),
        ));
    }
    let nf = n as f64;
    let log_term = (1.0 / (2.0 * delta)).ln();
    let threshold = if sigma2_gamma_f > 0.0 {
        0.5 * (-nf * (1.0 - beta).powi(2) / (sigma2_gamma_f * gap)).exp()
    } else {
        0.0
    };
    Ok(LowerBound {
        value: (sigma2_gamma_f * log_term / (nf * gap)).sqrt(),
        alternate: (sigma2_gamma_f * log_term / nf).sqrt(),
        high_confidence: delta < threshold,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalHorizon {
    pub value: f64,
    pub rounded: usize,
}

/// `T* = log √N / log(1/γ)`, so that `γ^{T*} = 1/√N`.
pub fn optimal_horizon(n: usize, gamma: f64) -> Result<OptimalHorizon> {
    if n < 2 {
        return Err(Error::param("n", "optimal horizon needs N >= 2"));
    }
    optimal_horizon_real(n as f64, gamma)
}

/// [`optimal_horizon`] for a real-valued budget.
pub fn optimal_horizon_real(n: f64, gamma: f64) -> Result<OptimalHorizon> {
    check_gamma(gamma)?;
    if gamma == 0.0 || gamma == 1.0 {
        return Err(Error::DegenerateBound(format!(
            "no optimal horizon at gamma = {gamma}"
        )));
    }
    let value = 0.5 * n.ln() / (1.0 / gamma).ln();
    // Absorb rounding noise before taking the ceiling.
    let rounded = ((value - 1e-9).ceil().max(1.0)) as usize;
    Ok(OptimalHorizon { value, rounded })
}

/// `β̄ = (1+γ−2γᵀ) / (1+γ−2γ^{T+1})`.
pub fn fh_nonoptimality_threshold(gamma: f64, horizon: usize) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 || gamma == 1.0 {
        return Err(Error::param("gamma", "must lie in (0, 1)"));
    }
    if horizon == 0 {
        return Err(Error::param("horizon", "T must be at least 1"));
    }
    let t = horizon as i32;
    Ok((1.0 + gamma - 2.0 * gamma.powi(t)) / (1.0 + gamma - 2.0 * gamma.powi(t + 1)))
}

/// `min{N, 1 + ln(N(N+1)/(2δ)) / ln(1/γ)}`.
pub fn ah_max_horizon_bound(n: usize, gamma: f64, delta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_delta(delta)?;
    check_n(n)?;
    let nf = n as f64;
    let k = 1.0 + (nf * (nf + 1.0) / (2.0 * delta)).ln() / (1.0 / gamma).ln();
    Ok(k.min(nf))
}

/// Concentration bound of an estimator on a concrete chain.
///
/// Chain quantities (`β`, the `χ₂` terms, `σ²`) are computed exactly. When
/// `f` is not `[0, 1]`-valued it is written `f = lo + w·g` with `g ∈ [0, 1]`
/// and the bound for `g` is scaled by `w`; FHN additionally pays `|lo|·γᵀ`
/// because its mass is `1 − γᵀ`.
pub fn estimator_bound(
    chain: &ChainInstance,
    f: &StateFunction,
    spec: &EstimatorSpec,
    n: usize,
    delta: f64,
) -> Result<BoundReport> {
    spec.validate()?;
    chain.check_function(f)?;
    let gamma = spec.gamma;
    let (g, lo, width) = if f.is_unit_bounded() {
        (f.clone(), 0.0, 1.0)
    } else {
        f.to_unit()
    };
    let pi = stationary_distribution(&chain.kernel)?;
    let beta = spectral_gap_with(&chain.kernel, &pi)?.beta;
    let mut report = match spec.kind {
        EstimatorKind::Fhn | EstimatorKind::Fhc => {
            let t = spec.horizon.unwrap_or(1);
            let table = chi2_along_chain(chain, t)?;
            let sigma2 = pi.variance(g.values());
            fh_concentration_bound(
                spec.kind,
                beta,
                gamma,
                t,
                n,
                delta,
                &table,
                table[0] * sigma2,
            )?
        }
        EstimatorKind::Os => BoundReport {
            bound: "os_concentration".into(),
            value: os_concentration_bound(n, gamma, delta)?,
            bias: None,
            minimizers: Minimizers::default(),
            inputs: BoundInputs {
                n: Some(n),
                gamma: Some(gamma),
                delta: Some(delta),
                ..Default::default()
            },
        },
        EstimatorKind::As => {
            let pg = discounted_distribution(chain, gamma)?;
            let chi2 = chi_square_divergence(&chain.init, &pg)?;
            BoundReport {
                bound: "as_concentration".into(),
                value: as_concentration_bound(n, beta, gamma, delta, chi2)?,
                bias: None,
                minimizers: Minimizers::default(),
                inputs: BoundInputs {
                    n: Some(n),
                    gamma: Some(gamma),
                    beta: Some(beta),
                    delta: Some(delta),
                    chi2: Some(chi2),
                    ..Default::default()
                },
            }
        }
    };
    if (lo, width) != (0.0, 1.0) {
        let extra = match spec.kind {
            EstimatorKind::Fhn => lo.abs() * gamma.powi(spec.horizon.unwrap_or(1) as i32),
            _ => 0.0,
        };
        report.value = width * report.value + extra;
        report.bias = report.bias.map(|b| width * b + extra);
        report.inputs.rescaled = Some((lo, width));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Distribution, Kernel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fhn_bias_examples() {
        assert_abs_diff_eq!(fhn_bias_bound(0.9, 20).unwrap(), 0.121577, epsilon = 1e-6);
        assert_eq!(fhn_bias_bound(0.0, 3).unwrap(), 0.0);
        assert!(fhn_bias_bound(0.9, 5000).unwrap() < 1e-200);
    }

    #[test]
    fn fhc_bias_beta_zero_matches_closed_form() {
        let (gamma, t) = (0.9f64, 10);
        let r = fhc_bias_bound(0.0, gamma, t, 4.0).unwrap();
        assert_abs_diff_eq!(r.value, 0.0348678, epsilon = 1e-7);
        let gt = gamma.powi(t as i32);
        let corollary = (1.0 - gamma) / (1.0 - gt) * gt * (2.0f64).min(1.0 - gt);
        assert_abs_diff_eq!(r.value, corollary, epsilon = 1e-12);
    }

    #[test]
    fn fhc_bias_beta_one_below_corollary() {
        for gamma in [0.5, 0.9, 0.99] {
            for t in [1, 5, 30] {
                for cs in [0.0, 0.01, 0.5, 4.0, 100.0] {
                    let r = fhc_bias_bound(1.0, gamma, t, cs).unwrap();
                    let corollary = 2.0 * gamma.powi(t as i32) * cs.sqrt().min(1.0);
                    assert!(r.value <= corollary + 1e-12, "{gamma} {t} {cs}");
                }
            }
        }
    }

    #[test]
    fn fhc_bias_fails_off_stationarity_at_beta_zero() {
        // P = 1π with π = (0.3, 0.7), ν = δ₀, f = 1{0}, T = 1: E[FHC] = νf = 1
        // and π_γ f = (1 − γ) + γ·0.3.
        let gamma = 0.5f64;
        let k = Kernel::new(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let pi = Distribution::new(vec![0.3, 0.7]).unwrap();
        let nu = Distribution::dirac(2, 0);
        let chi2 = crate::chain::chi_square_divergence(&nu, &pi).unwrap();
        let cs = chi2 * pi.variance(&[1.0, 0.0]);
        assert_abs_diff_eq!(cs, 0.49, epsilon = 1e-12);
        let bias = 1.0 - ((1.0 - gamma) + gamma * 0.3);
        assert_abs_diff_eq!(bias, 0.35, epsilon = 1e-12);
        let chain = ChainInstance::new("c", k, nu).unwrap();
        let f = crate::chain::StateFunction::new(vec![1.0, 0.0]);
        let exact = crate::estimators::exact_fh_expectation(
            &chain,
            gamma,
            1,
            &f,
            crate::estimators::EstimatorKind::Fhc,
        )
        .unwrap();
        let target = crate::chain::discounted_mean(&chain, gamma, &f).unwrap();
        assert_abs_diff_eq!((exact - target).abs(), bias, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fhc_bias_bound(0.0, gamma, 1, cs).unwrap().value,
            0.25,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            fhc_bias_bound_corrected(0.0, gamma, 1, cs).unwrap().value,
            bias,
            epsilon = 1e-12
        );
    }

    #[test]
    fn corrected_fhc_bias_closed_forms() {
        for gamma in [0.5f64, 0.9, 0.99] {
            for t in [1, 5, 30] {
                let gt = gamma.powi(t as i32);
                for cs in [0.0, 0.01, 0.5, 4.0] {
                    let r = fhc_bias_bound_corrected(0.0, gamma, t, cs).unwrap();
                    let closed = (1.0 - gamma) / (1.0 - gt) * gt * cs.sqrt().min(1.0);
                    assert_abs_diff_eq!(r.value, closed, epsilon = 1e-12);
                    let one = fhc_bias_bound_corrected(1.0, gamma, t, cs).unwrap().value;
                    assert!(one <= 2.0 * gt * cs.sqrt().min(1.0) + 1e-12);
                    assert!(r.value >= fhc_bias_bound(0.0, gamma, t, cs).unwrap().value - 1e-15);
                }
            }
        }
    }

    #[test]
    fn fhc_bias_vanishes_from_stationarity() {
        let r = fhc_bias_bound(0.7, 0.9, 12, 0.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.minimizers.t0, Some(0));
        assert_eq!(r.minimizers.s0, Some(Index::Finite(0)));
    }

    #[test]
    fn fhc_dominance_at_beta_one() {
        let (gamma, t) = (0.9, 15);
        let fhn = fhn_bias_bound(gamma, t).unwrap();
        let fhc = fhc_bias_bound(1.0, gamma, t, 1e4).unwrap().value;
        assert!(fhn <= fhc && fhc <= 2.0 * fhn + 1e-12);
        assert_abs_diff_eq!(fhc, 2.0 * fhn - fhn * fhn, epsilon = 1e-12);
    }

    #[test]
    fn fh_concentration_example_terms() {
        let (gamma, t, n, delta) = (0.9f64, 10, 1000, 0.1);
        let mut table = vec![0.25; t + 1];
        table[1] = 0.0417;
        let r = fh_concentration_bound(EstimatorKind::Fhn, 0.0, gamma, t, n, delta, &table, 0.04)
            .unwrap();
        // Independent evaluation of the j₀ = 1 term.
        let d1 = (8.0 * 10.0 * ((1.0417f64).ln() + 4.0 * 20f64.ln()) / 1000.0).sqrt()
            * (1.0 + (gamma.powi(2) - gamma.powi(20)) / (1.0 - gamma * gamma)).sqrt();
        assert_abs_diff_eq!(d1, 2.1089, epsilon = 1e-4);
        assert!(r.value <= gamma.powi(10) + 0.1 * d1 + 1e-12);
        assert_abs_diff_eq!(r.value, gamma.powi(10) + 0.1 * d1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bias.unwrap(), gamma.powi(10), epsilon = 1e-15);
        assert!(matches!(r.minimizers.j0, Some(0 | 1)));
    }

    #[test]
    fn fh_concentration_beta_one_uses_full_horizon() {
        let table = vec![0.5; 21];
        for kind in [EstimatorKind::Fhn, EstimatorKind::Fhc] {
            let r = fh_concentration_bound(kind, 1.0, 0.9, 20, 2000, 0.05, &table, 0.1).unwrap();
            assert_eq!(r.minimizers.j0, Some(20));
        }
    }

    #[test]
    fn fh_concentration_errors() {
        let table = vec![0.0; 11];
        assert!(matches!(
            fh_concentration_bound(EstimatorKind::Fhn, 0.5, 0.9, 10, 1001, 0.1, &table, 0.0),
            Err(Error::IndivisibleBudget { .. })
        ));
        assert!(
            fh_concentration_bound(EstimatorKind::Os, 0.5, 0.9, 10, 1000, 0.1, &table, 0.0)
                .is_err()
        );
        assert!(fh_concentration_bound(
            EstimatorKind::Fhn,
            0.5,
            0.9,
            10,
            1000,
            0.1,
            &table[..5],
            0.0
        )
        .is_err());
    }

    #[test]
    fn os_examples() {
        assert_abs_diff_eq!(
            os_concentration_bound(1000, 0.9, 0.1).unwrap(),
            0.29604,
            epsilon = 1e-5
        );
        let a = os_concentration_bound(500, 0.9, 0.1).unwrap();
        let b = os_concentration_bound(2000, 0.9, 0.1).unwrap();
        assert_abs_diff_eq!(a, 2.0 * b, epsilon = 1e-14);
        assert!(matches!(
            os_concentration_bound(10, 1.0, 0.1),
            Err(Error::DegenerateBound(_))
        ));
    }

    #[test]
    fn as_examples() {
        let v = as_concentration_bound(1000, 0.5, 0.9, 0.1, 0.0275).unwrap();
        assert_abs_diff_eq!(v, 0.20922, epsilon = 1e-5);
        let v0 = as_concentration_bound(1000, 0.5, 0.9, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(v0, (8.0 * 20f64.ln() / 550.0).sqrt(), epsilon = 1e-15);
        assert!(matches!(
            as_concentration_bound(10, 1.0, 1.0, 0.1, 0.0),
            Err(Error::DegenerateBound(_))
        ));
        assert!(as_concentration_bound(10, 0.5, 1.0, 0.1, 0.0).is_ok());
    }

    #[test]
    fn as_bias_examples() {
        let v = as_bias_bound(100, 0.5, 0.9, 0.0067).unwrap();
        assert_abs_diff_eq!(v, 0.0014882, epsilon = 1e-7);
        assert_eq!(as_bias_bound(100, 0.5, 0.9, 0.0).unwrap(), 0.0);
        let a = as_bias_bound(1000, 0.5, 0.9, 1.0).unwrap();
        let b = as_bias_bound(10000, 0.5, 0.9, 1.0).unwrap();
        assert_abs_diff_eq!(a / b, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn lower_bound_examples() {
        let lb = minimax_lower_bound(1000, 0.5, 0.9, 0.05, 0.25).unwrap();
        assert_abs_diff_eq!(lb.value, 0.032351, epsilon = 1e-6);
        assert!(!lb.high_confidence);
        assert_abs_diff_eq!(
            lb.applicable(),
            (0.25 * 10f64.ln() / 1000.0).sqrt(),
            epsilon = 1e-15
        );

        let b0 = minimax_lower_bound(400, 0.0, 0.9, 0.01, 0.2).unwrap();
        assert_abs_diff_eq!(b0.value, (0.2 * 50f64.ln() / 400.0).sqrt(), epsilon = 1e-15);

        let g1 = minimax_lower_bound(400, 0.3, 1.0, 0.01, 0.2).unwrap();
        assert_abs_diff_eq!(
            g1.value,
            (0.2 * 50f64.ln() / (400.0 * 0.7)).sqrt(),
            epsilon = 1e-15
        );

        // Slow mixing and a small budget put δ inside the regime.
        let hc = minimax_lower_bound(10, 0.99, 0.99, 0.1, 0.25).unwrap();
        assert!(hc.high_confidence);
        assert_eq!(hc.applicable(), hc.value);
        assert!(minimax_lower_bound(10, 0.5, 0.9, 0.6, 0.25).is_err());
    }

    #[test]
    fn optimal_horizon_examples() {
        let t = optimal_horizon(10_000, 0.9).unwrap();
        assert_abs_diff_eq!(t.value, 43.708, epsilon = 1e-3);
        assert_eq!(t.rounded, 44);
        let e = optimal_horizon_real(std::f64::consts::E.powi(2), (-1.0f64).exp()).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-12);
        assert_eq!(e.rounded, 1);
        for (n, gamma) in [(100, 0.5), (12345, 0.99), (10, 0.3)] {
            let t = optimal_horizon(n, gamma).unwrap();
            assert_abs_diff_eq!(
                gamma.powf(t.value),
                1.0 / (n as f64).sqrt(),
                epsilon = 1e-12
            );
        }
        assert!(optimal_horizon(100, 1.0).is_err());
        assert!(optimal_horizon(100, 0.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_abs_diff_eq!(
            fh_nonoptimality_threshold(0.9, 5).unwrap(),
            0.85893,
            epsilon = 1e-5
        );
        assert!(fh_nonoptimality_threshold(0.9, 400).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn ah_horizon_examples() {
        assert_abs_diff_eq!(
            ah_max_horizon_bound(1000, 0.9, 0.05).unwrap(),
            154.0,
            epsilon = 0.05
        );
        assert!(ah_max_horizon_bound(1000, 1e-6, 0.05).unwrap() < 2.5);
        assert_eq!(ah_max_horizon_bound(50, 0.9999, 1e-9).unwrap(), 50.0);
    }

    #[test]
    fn report_serializes_infinite_index() {
        let r = fhc_bias_bound(0.0, 0.9, 3, 1e6).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["minimizers"]["s0"], serde_json::json!(0));
        let r = fhc_bias_bound(1.0, 0.9, 3, 1e6).unwrap();
        assert_eq!(serde_json::to_value(&r).unwrap()["minimizers"]["s0"], "inf");
    }

    #[test]
    fn estimator_bound_rescales() {
        let k = Kernel::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let chain = ChainInstance::new("c", k, Distribution::uniform(2)).unwrap();
        let unit = StateFunction::new(vec![1.0, 0.0]);
        let wide = StateFunction::new(vec![5.0, -1.0]);
        for kind in EstimatorKind::ALL {
            let spec = EstimatorSpec::new(kind, 0.9, Some(10)).unwrap();
            let a = estimator_bound(&chain, &unit, &spec, 1000, 0.1).unwrap();
            let b = estimator_bound(&chain, &wide, &spec, 1000, 0.1).unwrap();
            let extra = if kind == EstimatorKind::Fhn {
                0.9f64.powi(10)
            } else {
                0.0
            };
            assert_abs_diff_eq!(b.value, 6.0 * a.value + extra, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn concentration_monotone(
            n in 1usize..5000,
            beta in 0.0f64..0.999,
            gamma in 0.01f64..0.99,
            delta in 0.01f64..0.4,
            chi2 in 0.0f64..10.0,
        ) {
            let os = |n, d| os_concentration_bound(n, gamma, d).unwrap();
            let asb = |n, d| as_concentration_bound(n, beta, gamma, d, chi2).unwrap();
            let lb = |n, d| minimax_lower_bound(n, beta, gamma, d, 0.2).unwrap().value;
            for b in [&os as &dyn Fn(usize, f64) -> f64, &asb, &lb] {
                prop_assert!(b(n, delta) >= 0.0);
                prop_assert!(b(2 * n, delta) <= b(n, delta));
                prop_assert!(b(n, delta / 2.0) >= b(n, delta));
            }
        }

        #[test]
        fn fh_concentration_monotone(
            m in 1usize..200,
            t in 1usize..12,
            beta in 0.0f64..=1.0,
            gamma in 0.05f64..0.99,
            delta in 0.01f64..0.5,
            cs in 0.0f64..4.0,
        ) {
            let table: Vec<f64> = (0..=t).map(|j| cs * beta.powi(2 * j as i32)).collect();
            for kind in [EstimatorKind::Fhn, EstimatorKind::Fhc] {
                let b = |n, d| fh_concentration_bound(kind, beta, gamma, t, n, d, &table, cs).unwrap();
                let base = b(t * m, delta);
                prop_assert!(base.value >= 0.0);
                prop_assert!(base.minimizers.j0.unwrap() <= t);
                prop_assert!(b(2 * t * m, delta).value <= base.value + 1e-12);
                prop_assert!(b(t * m, delta / 2.0).value >= base.value - 1e-12);
            }
        }

        #[test]
        fn fhc_bias_minimizers_in_range(
            beta in 0.0f64..=1.0,
            gamma in 0.0f64..0.999,
            t in 1usize..40,
            cs in 0.0f64..50.0,
        ) {
            let r = fhc_bias_bound(beta, gamma, t, cs).unwrap();
            prop_assert!(r.value >= 0.0);
            prop_assert!(r.minimizers.t0.unwrap() <= t);
            if let Some(Index::Finite(s)) = r.minimizers.s0 {
                prop_assert!(s <= 10 * t + 100);
            }
        }
    }
}

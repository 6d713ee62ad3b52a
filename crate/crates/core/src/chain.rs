//! Finite Markov chains and their exact oracles.
//!
//! States are indexed `0..n`. A [`Kernel`] is a row-stochastic matrix with
//! entry `(x, y) = P(y | x)`. Everything here is dense linear algebra, so
//! the oracles are exact up to floating point:
//!
//! ```text
//! π      : π P = π,  Σ π = 1
//! π_γ    = (1 − γ) ν (I − γ P)⁻¹ = Σ_t (1 − γ) γᵗ ν Pᵗ
//! P_γ    = (1 − γ) 𝟏 ν + γ P          (π_γ is its stationary law)
//! β      = ‖P − 𝟏π‖_{π, 2→2}
//! χ₂(ν‖μ) = Σ_x (ν(x)/μ(x) − 1)² μ(x)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums and distribution masses must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Residual tolerance for linear solves.
pub const SOLVE_TOL: f64 = 1e-10;
/// Tolerance for spectral quantities.
pub const SPECTRAL_TOL: f64 = 1e-9;

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::param("gamma", format!("{gamma} is not in [0, 1]")))
    }
}

/// Row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    matrix: DMatrix<f64>,
}

impl Kernel {
    /// Builds a kernel from row vectors; see [`validate_kernel`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_kernel(&rows)
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let rows = (0..matrix.nrows())
            .map(|i| matrix.row(i).iter().copied().collect())
            .collect::<Vec<Vec<f64>>>();
        validate_kernel(&rows)
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `P(to | from)`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[(from, to)]
    }

    pub fn row(&self, from: usize) -> Vec<f64> {
        self.matrix.row(from).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|x| self.row(x)).collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `μ P` for a row vector `μ`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(mu);
        (self.matrix.transpose() * v).iter().copied().collect()
    }

    /// `P g` for a column vector `g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(g);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Eigenvalues of the transition matrix (equivalently of its transpose).
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.matrix.complex_eigenvalues().iter().copied().collect()
    }
}

/// Validates a raw matrix as a transition kernel.
///
/// Rows whose sum is within [`STOCHASTIC_TOL`] of 1 are renormalized
/// exactly; anything further off, or any negative or non-finite entry, is
/// rejected.
pub fn validate_kernel(rows: &[Vec<f64>]) -> Result<Kernel> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::param("kernel", "needs at least one state"));
    }
    let mut matrix = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NonSquare {
                rows: n,
                row: i,
                cols: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        if !sum.is_finite() || min.is_nan() || min < 0.0 || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticRow { row: i, sum, min });
        }
        for (j, &p) in row.iter().enumerate() {
            matrix[(i, j)] = p / sum;
        }
    }
    Ok(Kernel { matrix })
}

/// Probability vector over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} = {} outside [0, 1]",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    /// Uniform distribution on `n` states.
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at `state`.
    pub fn dirac(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    /// Wraps the output of a numerical computation: rounding noise below
    /// zero is clipped and the vector renormalized.
    pub(crate) fn from_computed(mut probs: Vec<f64>) -> Self {
        for p in &mut probs {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `μ g`.
    pub fn expect(&self, g: &[f64]) -> f64 {
        self.probs.iter().zip(g).map(|(p, v)| p * v).sum()
    }

    /// `μ (g − μ g)²`.
    pub fn variance(&self, g: &[f64]) -> f64 {
        let m = self.expect(g);
        self.probs
            .iter()
            .zip(g)
            .map(|(p, v)| p * (v - m) * (v - m))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Real-valued function on states, optionally with a declared range.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: Vec<f64>,
    declared_range: Option<(f64, f64)>,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            declared_range: None,
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(vec![c; n])
    }

    pub fn with_range(values: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::param(
                "declared_range",
                format!("[{lo}, {hi}] is empty"),
            ));
        }
        if let Some(v) = values.iter().find(|v| **v < lo || **v > hi) {
            return Err(Error::param(
                "declared_range",
                format!("value {v} outside [{lo}, {hi}]"),
            ));
        }
        Ok(Self {
            values,
            declared_range: Some((lo, hi)),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn declared_range(&self) -> Option<(f64, f64)> {
        self.declared_range
    }

    /// Declared range, or the observed `[min, max]` when none was declared.
    pub fn range(&self) -> (f64, f64) {
        self.declared_range.unwrap_or_else(|| {
            let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = self
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_unit_bounded(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Affine map of `f` onto `[0, 1]`: returns `(g, lo, width)` with
    /// `f = lo + width · g`. A flat range maps to `g ≡ 0`.
    pub fn to_unit(&self) -> (StateFunction, f64, f64) {
        let (lo, hi) = self.range();
        let width = hi - lo;
        let values = if width > 0.0 {
            self.values
                .iter()
                .map(|v| ((v - lo) / width).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![0.0; self.values.len()]
        };
        (
            StateFunction {
                values,
                declared_range: Some((0.0, 1.0)),
            },
            lo,
            width,
        )
    }

    pub fn shifted(&self, c: f64) -> StateFunction {
        StateFunction {
            values: self.values.iter().map(|v| v + c).collect(),
            declared_range: self.declared_range.map(|(lo, hi)| (lo + c, hi + c)),
        }
    }
}

/// A kernel together with its initial-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance {
    pub name: String,
    pub kernel: Kernel,
    pub init: Distribution,
}

impl ChainInstance {
    pub fn new(name: impl Into<String>, kernel: Kernel, init: Distribution) -> Result<Self> {
        if kernel.n() != init.len() {
            return Err(Error::DimensionMismatch {
                expected: kernel.n(),
                got: init.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            kernel,
            init,
        })
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub(crate) fn check_function(&self, f: &StateFunction) -> Result<()> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Same chain with a different initial distribution.
    pub fn with_init(&self, init: Distribution) -> Result<Self> {
        ChainInstance::new(self.name.clone(), self.kernel.clone(), init)
    }
}

/// Closed communicating classes of the transition graph, each sorted.
pub fn closed_classes(kernel: &Kernel) -> Vec<Vec<usize>> {
    let n = kernel.n();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for x in 0..n {
        for y in 0..n {
            if kernel.prob(x, y) > 0.0 {
                graph.add_edge(nodes[x], nodes[y], ());
            }
        }
    }
    let sccs = kosaraju_scc(&graph);
    let mut class_of = vec![0usize; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            class_of[node.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .filter(|scc| {
            scc.iter().all(|node| {
                let x = node.index();
                (0..n).all(|y| kernel.prob(x, y) == 0.0 || class_of[y] == class_of[x])
            })
        })
        .map(|scc| {
            let mut states: Vec<usize> = scc.iter().map(|node| node.index()).collect();
            states.sort_unstable();
            states
        })
        .collect();
    closed.sort();
    closed
}

/// The unique invariant distribution `π` of `P`.
///
/// Uniqueness holds iff the transition graph has exactly one closed class;
/// periodic chains qualify. States outside the closed class get mass 0.
pub fn stationary_distribution(kernel: &Kernel) -> Result<Distribution> {
    let classes = closed_classes(kernel);
    if classes.len() != 1 {
        return Err(Error::NonUniqueStationary {
            closed_classes: classes.len(),
        });
    }
    let class = &classes[0];
    let m = class.len();
    // (P_C)ᵀ − I with its last equation swapped for Σ π = 1.
    let mut a = DMatrix::zeros(m, m);
    for (i, &y) in class.iter().enumerate() {
        for (j, &x) in class.iter().enumerate() {
            a[(i, j)] = kernel.prob(x, y) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    let mut probs = vec![0.0; kernel.n()];
    for (i, &x) in class.iter().enumerate() {
        probs[x] = sol[i];
    }
    Ok(Distribution::from_computed(probs))
}

/// `π_γ = (1 − γ) ν (I − γP)⁻¹`; for `γ = 1` this is the stationary law.
pub fn discounted_distribution(chain: &ChainInstance, gamma: f64) -> Result<Distribution> {
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return stationary_distribution(&chain.kernel);
    }
    let n = chain.n();
    // Solve (I − γP)ᵀ xᵀ = (1 − γ) νᵀ.
    let a = DMatrix::identity(n, n) - chain.kernel.matrix.transpose() * gamma;
    let b = DVector::from_iterator(n, chain.init.probs().iter().map(|p| (1.0 - gamma) * p));
    let sol = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    Ok(Distribution::from_computed(sol.iter().copied().collect()))
}

/// `P_γ = (1 − γ) 𝟏 ν + γ P`.
pub fn discounted_kernel(chain: &ChainInstance, gamma: f64) -> Result<Kernel> {
    check_gamma(gamma)?;
    let n = chain.n();
    let nu = chain.init.probs();
    let matrix = DMatrix::from_fn(n, n, |x, y| {
        (1.0 - gamma) * nu[y] + gamma * chain.kernel.prob(x, y)
    });
    Kernel::from_matrix(matrix)
}

/// Absolute spectral gap `1 − β` with `β = ‖P − Π‖_{π,2→2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub gap: f64,
    pub beta: f64,
}

/// `β` as the largest singular value of `D^{1/2} (P − 𝟏π) D^{−1/2}`.
///
/// This is the operator norm on `L₂(π)`, which for reversible (or normal)
/// chains coincides with the second-largest eigenvalue modulus.
pub fn spectral_gap(kernel: &Kernel) -> Result<SpectralGap> {
    let pi = stationary_distribution(kernel)?;
    spectral_gap_with(kernel, &pi)
}

pub(crate) fn spectral_gap_with(kernel: &Kernel, pi: &Distribution) -> Result<SpectralGap> {
    let n = kernel.n();
    let p = pi.probs();
    if let Some(state) = p.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMassState { state });
    }
    let sq: Vec<f64> = p.iter().map(|m| m.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |x, y| sq[x] * (kernel.prob(x, y) - p[y]) / sq[y]);
    let beta = a
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0);
    Ok(SpectralGap {
        gap: 1.0 - beta,
        beta,
    })
}

/// `χ₂(ν ‖ μ)`.
pub fn chi_square_divergence(nu: &Distribution, mu: &Distribution) -> Result<f64> {
    if nu.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: nu.len(),
        });
    }
    let mut total = 0.0;
    for (state, (&a, &b)) in nu.probs().iter().zip(mu.probs()).enumerate() {
        if b > 0.0 {
            let r = a / b - 1.0;
            total += r * r * b;
        } else if a > 0.0 {
            return Err(Error::AbsoluteContinuityViolated { state });
        }
    }
    Ok(total)
}

/// `π_γ f`.
pub fn discounted_mean(chain: &ChainInstance, gamma: f64, f: &StateFunction) -> Result<f64> {
    chain.check_function(f)?;
    Ok(discounted_distribution(chain, gamma)?.expect(f.values()))
}

/// `σ²_γ f = π_γ (f − π_γ f)²`.
pub fn discounted_variance(chain: &ChainInstance, gamma: f64, f: &StateFunction) -> Result<f64> {
    chain.check_function(f)?;
    Ok(discounted_distribution(chain, gamma)?.variance(f.values()))
}

/// `σ² f` under the stationary distribution.
pub fn stationary_variance(kernel: &Kernel, f: &StateFunction) -> Result<f64> {
    if f.len() != kernel.n() {
        return Err(Error::DimensionMismatch {
            expected: kernel.n(),
            got: f.len(),
        });
    }
    Ok(stationary_distribution(kernel)?.variance(f.values()))
}

/// `ν Pᵗ` by repeated vector–matrix products.
pub fn t_step_distribution(chain: &ChainInstance, t: usize) -> Distribution {
    let mut mu = chain.init.probs().to_vec();
    for _ in 0..t {
        mu = chain.kernel.push_forward(&mu);
    }
    Distribution::from_computed(mu)
}

/// `χ₂(ν Pʲ ‖ π)` for `j = 0..=max_steps`.
pub fn chi2_along_chain(chain: &ChainInstance, max_steps: usize) -> Result<Vec<f64>> {
    let pi = stationary_distribution(&chain.kernel)?;
    let mut mu = chain.init.clone();
    let mut out = Vec::with_capacity(max_steps + 1);
    for j in 0..=max_steps {
        if j > 0 {
            mu = Distribution::from_computed(chain.kernel.push_forward(mu.probs()));
        }
        out.push(chi_square_divergence(&mu, &pi)?);
    }
    Ok(out)
}

/// Both sides of `|ν Pᵗ f − π f| ≤ √χ₂(ν‖π) · βᵗ · √σ²f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingDeviation {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn mixing_deviation_terms(
    chain: &ChainInstance,
    f: &StateFunction,
    t: usize,
) -> Result<MixingDeviation> {
    chain.check_function(f)?;
    let pi = stationary_distribution(&chain.kernel)?;
    let SpectralGap { beta, .. } = spectral_gap_with(&chain.kernel, &pi)?;
    let chi2 = chi_square_divergence(&chain.init, &pi)?;
    let sigma2 = pi.variance(f.values());
    let lhs = (t_step_distribution(chain, t).expect(f.values()) - pi.expect(f.values())).abs();
    let rhs = chi2.sqrt() * beta.powi(t as i32) * sigma2.sqrt();
    Ok(MixingDeviation { lhs, rhs })
}

/// On-disk chain description:
/// `{"name": .., "kernel": [[..], ..], "init": [..], "functions": {"f": [..]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub name: String,
    pub kernel: Vec<Vec<f64>>,
    pub init: Vec<f64>,
    #[serde(default)]
    pub functions: BTreeMap<String, Vec<f64>>,
}

impl ChainFile {
    pub fn from_instance<'a>(
        chain: &ChainInstance,
        functions: impl IntoIterator<Item = (&'a str, &'a StateFunction)>,
    ) -> Self {
        Self {
            name: chain.name.clone(),
            kernel: chain.kernel.rows(),
            init: chain.init.probs().to_vec(),
            functions: functions
                .into_iter()
                .map(|(k, f)| (k.to_string(), f.values().to_vec()))
                .collect(),
        }
    }

    pub fn to_instance(&self) -> Result<ChainInstance> {
        ChainInstance::new(
            self.name.clone(),
            Kernel::new(self.kernel.clone())?,
            Distribution::new(self.init.clone())?,
        )
    }

    /// Named function, or the first one (by name) when `name` is `None`.
    pub fn function(&self, name: Option<&str>) -> Result<StateFunction> {
        let values = match name {
            Some(key) => self
                .functions
                .get(key)
                .ok_or_else(|| Error::param("function", format!("no function named `{key}`")))?,
            None => self
                .functions
                .values()
                .next()
                .ok_or_else(|| Error::param("function", "chain file defines no function"))?,
        };
        if values.len() != self.kernel.len() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.len(),
                got: values.len(),
            });
        }
        Ok(StateFunction::new(values.clone()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

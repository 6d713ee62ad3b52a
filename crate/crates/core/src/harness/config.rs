use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{
    check_gamma, discounted_mean, ChainFile, ChainInstance, Distribution, Kernel, StateFunction,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::instances::{
    alpha_cycle_chain, no_mixing_instance, random_chain, two_state_hard_instance,
};

/// Where the chain of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ChainSource {
    /// A chain JSON file; `function` picks one of its named functions.
    File {
        path: PathBuf,
        #[serde(default)]
        function: Option<String>,
    },
    /// Kernel and initial distribution given in place; needs `function`.
    Inline {
        name: String,
        kernel: Vec<Vec<f64>>,
        init: Vec<f64>,
    },
    /// Lazy cycle with `f = (1, −1, 2)`, started uniformly or from `start`.
    Alpha {
        alpha: f64,
        #[serde(default = "default_cycle_len")]
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<usize>,
    },
    /// Two-state hard instance with `f₊`; `gamma` defaults to the experiment's.
    Hard {
        beta: f64,
        epsilon: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// Symmetric two-state chain with `f = (1, 0)`.
    Nomix { beta: f64 },
    /// Random chain with `f` the indicator of state 0.
    Random {
        n: usize,
        seed: u64,
        #[serde(default)]
        min_entry: f64,
    },
}

fn default_cycle_len() -> usize {
    3
}

fn default_replications() -> usize {
    20
}

/// One estimator of an experiment; `horizon` is required for FHN and FHC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorEntry {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl EstimatorEntry {
    pub fn new(kind: EstimatorKind, horizon: Option<usize>) -> Self {
        Self { kind, horizon }
    }

    pub fn spec(&self, gamma: f64) -> Result<EstimatorSpec> {
        let horizon = if self.kind.is_fixed_horizon() {
            self.horizon
        } else {
            None
        };
        EstimatorSpec::new(self.kind, gamma, horizon)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub results: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub chain: ChainSource,
    /// Overrides the function supplied by the chain source.
    #[serde(default)]
    pub function: Option<Vec<f64>>,
    pub gamma: f64,
    pub estimators: Vec<EstimatorEntry>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Confidence level of the bound overlay; no overlay when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Size of the worker pool; rayon's default when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        // Relative chain paths are taken from the config's directory.
        if let ChainSource::File {
            path: chain_path, ..
        } = &mut cfg.chain
        {
            if chain_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *chain_path = dir.join(&*chain_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::param("estimators", "list is empty"));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(Error::param("budgets", "need at least one positive budget"));
        }
        if !self.budgets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::param("budgets", "must be strictly ascending"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::param("delta", format!("{d} is not in (0, 1)")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers", "must be at least 1"));
        }
        for e in &self.estimators {
            e.spec(self.gamma)?;
            if let (true, Some(t)) = (e.kind.is_fixed_horizon(), e.horizon) {
                if let Some(&n) = self.budgets.iter().find(|&&n| n % t != 0) {
                    return Err(Error::IndivisibleBudget { n, horizon: t });
                }
            }
        }
        Ok(())
    }

    /// Builds the chain, the function and the true mean `π_γ f`.
    pub fn resolve(&self) -> Result<ResolvedChain> {
        let (chain, f, params) = match &self.chain {
            ChainSource::File { path, function } => {
                let file = ChainFile::load(path)?;
                let f = match (&self.function, file.functions.is_empty()) {
                    (Some(_), _) | (None, true) => None,
                    (None, false) => Some(file.function(function.as_deref())?),
                };
                (file.to_instance()?, f, format!("file={}", path.display()))
            }
            ChainSource::Inline { name, kernel, init } => {
                let chain = ChainInstance::new(
                    name.clone(),
                    Kernel::new(kernel.clone())?,
                    Distribution::new(init.clone())?,
                )?;
                (chain, None, "inline".to_string())
            }
            ChainSource::Alpha { alpha, n, start } => {
                let (chain, f) = alpha_cycle_chain(*alpha, *n)?;
                match start {
                    None => (chain, Some(f), format!("alpha={alpha}")),
                    Some(x) if *x < *n => (
                        chain.with_init(Distribution::dirac(*n, *x))?,
                        Some(f),
                        format!("alpha={alpha};start={x}"),
                    ),
                    Some(x) => {
                        return Err(Error::param(
                            "start",
                            format!("state {x} is not below n = {n}"),
                        ))
                    }
                }
            }
            ChainSource::Hard {
                beta,
                epsilon,
                gamma,
            } => {
                let g = gamma.unwrap_or(self.gamma);
                let h = two_state_hard_instance(*beta, g, *epsilon)?;
                (
                    h.chain,
                    Some(h.f_plus),
                    format!("beta={beta};gamma={g};epsilon={epsilon}"),
                )
            }
            ChainSource::Nomix { beta } => (
                no_mixing_instance(*beta)?,
                Some(StateFunction::new(vec![1.0, 0.0])),
                format!("beta={beta}"),
            ),
            ChainSource::Random { n, seed, min_entry } => {
                let chain = random_chain(*n, *seed, *min_entry)?;
                let mut v = vec![0.0; *n];
                v[0] = 1.0;
                (
                    chain,
                    Some(StateFunction::new(v)),
                    format!("n={n};seed={seed};min_entry={min_entry}"),
                )
            }
        };
        let f = match (&self.function, f) {
            (Some(values), _) => StateFunction::new(values.clone()),
            (None, Some(f)) => f,
            (None, None) => {
                return Err(Error::param("function", "no function given for the chain"))
            }
        };
        let true_mean = discounted_mean(&chain, self.gamma, &f)?;
        Ok(ResolvedChain {
            chain,
            f,
            params,
            true_mean,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedChain {
    pub chain: ChainInstance,
    pub f: StateFunction,
    /// The `alpha_or_params` column.
    pub params: String,
    pub true_mean: f64,
}

/// The four estimators of the numerical study on the lazy cycle.
pub fn figure2_config(
    alpha: f64,
    gamma: f64,
    replications: usize,
    master_seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        chain: ChainSource::Alpha {
            alpha,
            n: 3,
            start: None,
        },
        function: None,
        gamma,
        estimators: vec![
            EstimatorEntry::new(EstimatorKind::As, None),
            EstimatorEntry::new(EstimatorKind::Os, None),
            EstimatorEntry::new(EstimatorKind::Fhn, Some(100)),
            EstimatorEntry::new(EstimatorKind::Fhc, Some(100)),
        ],
        budgets: vec![1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000],
        replications,
        master_seed,
        delta: None,
        workers: None,
        output: OutputPaths::default(),
    }
}

//! Estimation of γ-discounted means `π_γ f` in finite Markov chains.
//!
//! The crate is organised bottom-up:
//!
//! - [`chain`]: kernels, distributions and the exact linear-algebra oracles
//!   (stationary and discounted distributions, spectral gap, χ² divergence).
//! - [`sampling`]: reset policies, the reset-augmented sampling loop and
//!   trajectory segmentation.
//! - [`estimators`]: the fixed-horizon (FHN, FHC) and adaptive-horizon
//!   (OS, AS) estimators plus exact expectations for bias checks.
//! - [`bounds`]: closed-form bias, concentration, complexity and minimax
//!   lower bounds.
//! - [`instances`]: the two-state hard instance, the no-mixing chain, the
//!   lazy α-cycle and random chains.
//! - [`harness`]: seeded replication sweeps, coverage checks and CSV/JSON
//!   output.
//!
//! ```
//! use mclab_core::chain::{discounted_mean, ChainInstance, Distribution, Kernel, StateFunction};
//!
//! let kernel = Kernel::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
//! let init = Distribution::new(vec![0.5, 0.5]).unwrap();
//! let chain = ChainInstance::new("two-state", kernel, init).unwrap();
//! let f = StateFunction::new(vec![1.0, 0.0]);
//! let mean = discounted_mean(&chain, 0.9, &f).unwrap();
//! assert!((mean - 0.23 / 0.55).abs() < 1e-12);
//! ```

pub mod bounds;
pub mod chain;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod instances;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};

//! Robust sparse linear regression with the maximum correntropy criterion.
//!
//! The central solver is [`mcc_ard::fit_mcc_ard`]: a variational-Bayes
//! regression that combines a correntropy-induced likelihood with automatic
//! relevance determination (ARD), so irrelevant features are pruned without a
//! regularization strength to tune. Two baselines are provided for comparison:
//! Gaussian-noise ARD ([`ls_ard`]) and L1-regularized correntropy regression
//! ([`mcc_l1`]). [`synthgen`], [`eval`], [`model_selection`] and [`harness`]
//! make up the Monte-Carlo benchmark.
//!
//! ```
//! use mccard::synthgen::{generate, NoiseSpec, ScenarioSpec};
//! use mccard::{fit_mcc_ard, FitConfig};
//!
//! let spec = ScenarioSpec { n_train: 80, n_test: 40, dim: 20, n_relevant: 3,
//!                           noise: NoiseSpec::new(0.05, 5.0, 0.2).unwrap(), seed: 1 };
//! let (train, _test) = generate(&spec).unwrap();
//! let model = fit_mcc_ard(&train, &FitConfig::default().with_bandwidth(1.0)).unwrap();
//! assert!(model.n_selected() <= 20);
//! ```

pub mod correntropy;
pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
mod linalg;
pub mod ls_ard;
pub mod mcc_ard;
pub mod mcc_l1;
pub mod model;
pub mod model_selection;
pub mod rng;
pub mod synthgen;

pub use correntropy::KernelBandwidth;
pub use data::Dataset;
pub use error::{Error, Result};
pub use ls_ard::fit_ls_ard;
pub use mcc_ard::fit_mcc_ard;
pub use mcc_l1::{fit_mcc_l1, L1Config};
pub use model::{FitConfig, FitWarning, HessianMode, LikelihoodVariant, SparseLinearModel};

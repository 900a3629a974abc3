//! Statistically grounded evaluation tooling for few-shot benchmarks.
//!
//! The crate is organised around the estimator `ã`: the mean over `Kp`
//! episodes of per-episode accuracies, each measured on `Kq` queries.
//!
//! - [`variance_model`]: closed-form mean and variance of `ã`.
//! - [`planner`]: inverse problems (how many episodes, cheapest design).
//! - [`mc_oracle`]: hierarchical Beta-Bernoulli Monte Carlo check of the closed form.
//! - [`episode_protocol`]: reproducible N-way K-shot episode sampling and result aggregation.
//! - [`fid`]: Fréchet distance between Gaussian fits of precomputed feature sets.
//! - [`latent_blend`]: norm-corrected interpolation of a latent with noise.

pub mod episode_protocol;
pub mod error;
pub mod fid;
pub mod latent_blend;
pub mod mc_oracle;
pub mod planner;
pub mod rng;
pub mod variance_model;

pub use error::{Error, Result};
pub use variance_model::{AccuracyPrior, EvalDesign, VarianceReport};

//! Derivative-free policy search at desk scale.
//!
//! The crate contrasts two ways of exploring with zeroth-order information:
//! perturbing policy *parameters* (random search over weights) and perturbing
//! *actions* (exploration in the policy's output space). It ships the four
//! core optimizers, the gradient estimators behind them, closed-form linear
//! quadratic regulator (LQR) and regression test beds, and a reproducible
//! experiment harness with CSV output.
//!
//! Layout:
//! - [`rng`]: seeded, splittable randomness shared by everything else.
//! - [`estimators`]: single-shot gradient estimates and schedule constants.
//! - [`olr`]: online linear regression with bandit feedback, regret tooling.
//! - [`envs`]: LQR, regression-stream and contextual-bandit instances.
//! - [`search`]: multi-step policy search in parameter and action space.
//! - [`banditsearch`]: score-function and random-search training loops for
//!   the contextual bandit.
//! - [`harness`]: presets, tuning, validation, CSV emission.

pub mod banditsearch;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod olr;
pub mod policy;
pub mod rng;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{EstimatorScheme, GradEstimate, TheoryConstants};
pub use policy::{LinearPolicy, Policy};
pub use rng::SeededRng;

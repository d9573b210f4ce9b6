//! Design and analysis of adaptive (multi-armed bandit) experiments.
//!
//! The crate simulates bandit experiments, calibrates classical hypothesis
//! tests for adaptively collected data by simulating their null distribution
//! under the same policy, runs power analyses for a policy and test under a
//! prior over arm means, and selects the policy parameter and horizon that
//! maximize the experiment-cost-penalized reward
//! `F(T, r̄, w) = r̄ - w ln T`.
//!
//! The guide in `book/` walks through each piece. Its code listings run as
//! doctests of the `bandit-design-book` crate.

pub mod calibration;
pub mod config;
pub mod error;
pub mod objective;
pub mod power;
pub mod presets;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

//! Meta-learning for simple regret minimization in Gaussian, linear and
//! Bernoulli bandits.
//!
//! Tasks are drawn from an unknown prior, itself drawn from a meta-prior.
//! Agents play each task for `n` rounds and then recommend an arm; the
//! quantity of interest is the simple regret of that recommendation summed
//! over tasks.

pub mod bandit;
pub mod diagnostics;
pub mod environments;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod meta;
pub mod policies;
pub mod posteriors;

pub use error::{Error, Result};

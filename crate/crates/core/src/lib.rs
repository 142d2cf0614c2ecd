//! Multi-step consistency shortcut flow matching.
//!
//! - [`diff`]: reverse-mode differentiation over dense arrays
//! - [`net`]: the step- and time-conditioned velocity network
//! - [`flow`]: interpolation, losses, multi-step rollout targets, sampling
//! - [`aga`]: adaptive gradient allocation between the two losses
//! - [`tasks`]: toy datasets, the planar reach task and its expert
//! - [`metrics`]: energy distance between sample sets
//! - [`harness`]: configs, training, checkpoints, evaluation, ablations

pub mod aga;
pub mod diff;
pub mod error;
pub mod flow;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod tasks;

pub use error::{Error, Result};

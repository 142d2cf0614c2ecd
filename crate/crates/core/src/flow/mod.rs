//! Flow matching with multi-step consistency targets.
//!
//! Convention: `x_t = (1 - t) x0 + t x1`, so noise sits at `t = 0`, data at
//! `t = 1`, and the true velocity is `x1 - x0`. The network's step input
//! `d` asks for the average velocity over `[t, t + d]`; `d = 0` is the
//! instantaneous field.

mod batch;
mod codebook;
mod loss;
mod rollout;
mod sampler;

pub use batch::{
    dyadic_steps, sample_step_and_time, BatchBuilder, ConsBatch, ConsistencyBatch, FmBatch,
    StepSchedule, FINEST_STEP_EXPONENT,
};
pub use codebook::{draw_noise, draw_noise_batch, Codebook};
pub use loss::{fm_loss, mc_loss, LossRecord};
pub use rollout::{rollout_targets, RolloutTargets};
pub use sampler::sample;

use crate::diff::Array;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPoint {
    pub x0: Array,
    pub x1: Array,
    pub t: f64,
    pub x_t: Array,
    pub v_true: Array,
}

pub fn interpolate(x0: &Array, x1: &Array, t: f64) -> Result<InterpolationPoint> {
    if x0.shape() != x1.shape() {
        return Err(Error::InvalidArgument(format!(
            "interpolate: x0 {:?} vs x1 {:?}",
            x0.shape(),
            x1.shape()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
        });
    }
    let x_t = x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b);
    let v_true = x0.zip_map(x1, |a, b| b - a);
    Ok(InterpolationPoint {
        x0: x0.clone(),
        x1: x1.clone(),
        t,
        x_t,
        v_true,
    })
}

/// Row-wise interpolation for a batch with per-row times.
pub fn interpolate_rows(x0: &Array, x1: &Array, t: &[f64]) -> Result<(Array, Array)> {
    if x0.shape() != x1.shape() || x0.rows() != t.len() {
        return Err(Error::InvalidArgument(format!(
            "interpolate_rows: x0 {:?}, x1 {:?}, {} times",
            x0.shape(),
            x1.shape(),
            t.len()
        )));
    }
    let mut x_t = x0.clone();
    for (i, &ti) in t.iter().enumerate() {
        if !(0.0..=1.0).contains(&ti) {
            return Err(Error::OutOfRange {
                name: "t",
                value: ti,
            });
        }
        for (xt, b) in x_t.row_mut(i).iter_mut().zip(x1.row(i)) {
            *xt = (1.0 - ti) * *xt + ti * b;
        }
    }
    let v = x0.zip_map(x1, |a, b| b - a);
    Ok((x_t, v))
}

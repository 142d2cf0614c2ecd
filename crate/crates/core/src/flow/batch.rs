use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codebook::{draw_noise_batch, Codebook};
use super::interpolate_rows;
use crate::diff::Array;
use crate::error::{Error, Result};

/// Base step sizes are `2^-j` for `j = 1..=FINEST_STEP_EXPONENT`.
pub const FINEST_STEP_EXPONENT: u32 = 7;

pub const ALLOWED_STEP_COUNTS: [usize; 3] = [2, 4, 8];

/// Dyadic base steps `d` with `n * d <= 1`, coarsest first.
pub fn dyadic_steps(n: usize) -> Vec<f64> {
    (1..=FINEST_STEP_EXPONENT)
        .map(|j| 0.5f64.powi(j as i32))
        .filter(|&d| n as f64 * d <= 1.0)
        .collect()
}

/// Draws `d` uniformly from [`dyadic_steps`] and `t` uniformly from the
/// multiples of `d` in `[0, 1 - n d]`, so the n-step rollout ends at or
/// before `t = 1`. Both values are exact binary fractions.
pub fn sample_step_and_time<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (f64, f64) {
    let steps = dyadic_steps(n);
    let d = steps[rng.random_range(0..steps.len())];
    let slots = (1.0 / d).round() as usize - n;
    let t = rng.random_range(0..=slots) as f64 * d;
    (d, t)
}

/// How many rollout steps the consistency partition uses over training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepSchedule {
    /// Equal-length training phases, e.g. `4-8-2`.
    Phases(Vec<usize>),
    /// A fresh uniform choice per optimizer step.
    Random(Vec<usize>),
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let entries = match self {
            StepSchedule::Phases(v) | StepSchedule::Random(v) => v,
        };
        if entries.is_empty() {
            return Err(Error::Config("step schedule is empty".into()));
        }
        if let Some(bad) = entries.iter().find(|n| !ALLOWED_STEP_COUNTS.contains(n)) {
            return Err(Error::Config(format!(
                "step count {bad} not in {ALLOWED_STEP_COUNTS:?}"
            )));
        }
        Ok(())
    }

    /// Step count at training progress `p` in `[0, 1)`.
    pub fn step_count<R: Rng + ?Sized>(&self, progress: f64, rng: &mut R) -> usize {
        match self {
            StepSchedule::Phases(v) => {
                let idx = (progress.clamp(0.0, 1.0) * v.len() as f64) as usize;
                v[idx.min(v.len() - 1)]
            }
            StepSchedule::Random(v) => v[rng.random_range(0..v.len())],
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Random(v) if v.as_slice() == ALLOWED_STEP_COUNTS => write!(f, "random"),
            StepSchedule::Random(v) => {
                let s: Vec<_> = v.iter().map(usize::to_string).collect();
                write!(f, "random:{}", s.join("-"))
            }
            StepSchedule::Phases(v) => {
                let s: Vec<_> = v.iter().map(usize::to_string).collect();
                write!(f, "{}", s.join("-"))
            }
        }
    }
}

impl FromStr for StepSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_list = |body: &str| -> Result<Vec<usize>> {
            body.split(['-', ','])
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad step schedule {s:?}")))
                })
                .collect()
        };
        let sched = if s == "random" {
            StepSchedule::Random(ALLOWED_STEP_COUNTS.to_vec())
        } else if let Some(rest) = s.strip_prefix("random:") {
            StepSchedule::Random(parse_list(rest)?)
        } else {
            StepSchedule::Phases(parse_list(s)?)
        };
        sched.validate()?;
        Ok(sched)
    }
}

impl Serialize for StepSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Flow-matching partition: instantaneous targets `x1 - x0` at `d = 0`.
#[derive(Debug, Clone)]
pub struct FmBatch {
    pub x_t: Array,
    pub cond: Option<Array>,
    pub t: Vec<f64>,
    pub target: Array,
}

impl FmBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Consistency partition: start points for `n`-step rollouts of base step `d`.
#[derive(Debug, Clone)]
pub struct ConsBatch {
    pub x_t: Array,
    pub cond: Option<Array>,
    pub t: Vec<f64>,
    pub d: Vec<f64>,
    /// Step-size conditioning used for the small rollout steps. Equal to
    /// `d`, except at the finest dyadic step where the instantaneous field
    /// (`0`) is queried when the builder asks for it.
    pub rollout_d: Vec<f64>,
    pub n: usize,
}

impl ConsBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "rollout needs n >= 2, got {}",
                self.n
            )));
        }
        for (&t, &d) in self.t.iter().zip(&self.d) {
            if t + self.n as f64 * d > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "t + n*d = {t} + {}*{d} exceeds 1",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConsistencyBatch {
    pub fm: FmBatch,
    pub cons: ConsBatch,
    pub fraction: f64,
}

/// Splits data batches into the two partitions.
#[derive(Debug, Clone)]
pub struct BatchBuilder {
    pub fraction: f64,
    pub codebook: Option<Codebook>,
    pub finest_step_instantaneous: bool,
}

impl BatchBuilder {
    /// Rows `[0, B - m)` go to flow matching and the last `m =
    /// round(B * fraction)` rows to the consistency partition.
    pub fn build<R: Rng + ?Sized>(
        &self,
        x1: &Array,
        cond: Option<&Array>,
        n: usize,
        rng: &mut R,
    ) -> Result<ConsistencyBatch> {
        let b = x1.rows();
        let dim = x1.cols();
        let m = (b as f64 * self.fraction).round() as usize;
        let m = m.min(b);
        let split = b - m;
        let fm_idx: Vec<usize> = (0..split).collect();
        let cons_idx: Vec<usize> = (split..b).collect();

        let fm_x1 = x1.gather_rows(&fm_idx);
        let fm_x0 = draw_noise_batch(None, split, dim, rng);
        let fm_t: Vec<f64> = (0..split).map(|_| rng.random::<f64>()).collect();
        let (fm_xt, fm_target) = interpolate_rows(&fm_x0, &fm_x1, &fm_t)?;

        let cons_x1 = x1.gather_rows(&cons_idx);
        let cons_x0 = draw_noise_batch(self.codebook.as_ref(), m, dim, rng);
        let mut cons_t = Vec::with_capacity(m);
        let mut cons_d = Vec::with_capacity(m);
        for _ in 0..m {
            let (d, t) = sample_step_and_time(n, rng);
            cons_d.push(d);
            cons_t.push(t);
        }
        let (cons_xt, _) = interpolate_rows(&cons_x0, &cons_x1, &cons_t)?;
        let finest = 0.5f64.powi(FINEST_STEP_EXPONENT as i32);
        let rollout_d = cons_d
            .iter()
            .map(|&d| {
                if self.finest_step_instantaneous && d == finest {
                    0.0
                } else {
                    d
                }
            })
            .collect();

        let cond_rows = |idx: &[usize]| cond.map(|c| c.gather_rows(idx));
        let cons = ConsBatch {
            x_t: cons_xt,
            cond: cond_rows(&cons_idx),
            t: cons_t,
            d: cons_d,
            rollout_d,
            n,
        };
        cons.check()?;
        Ok(ConsistencyBatch {
            fm: FmBatch {
                x_t: fm_xt,
                cond: cond_rows(&fm_idx),
                t: fm_t,
                target: fm_target,
            },
            cons,
            fraction: if b == 0 { 0.0 } else { m as f64 / b as f64 },
        })
    }
}

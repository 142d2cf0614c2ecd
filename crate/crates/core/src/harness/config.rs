//! Training configuration. Every field is required in the JSON file; the
//! resolved config is embedded in each checkpoint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aga::AgaConfig;
use crate::error::{Error, Result};
use crate::flow::StepSchedule;
use crate::net::NetConfig;
use crate::optim::OptimizerConfig;
use crate::tasks::ToyDistribution;

/// Name of the conditional imitation task.
pub const REACH_TASK: &str = "reach";

/// Smallest and largest nonzero share of each batch given to the
/// consistency loss.
pub const CONS_FRACTION_RANGE: (f64, f64) = (0.125, 0.25);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// `two-moons`, `gauss-mixture-8`, `swiss-roll` or `reach`.
    pub name: String,
    /// Training samples for toy tasks, expert episodes for `reach`.
    pub size: usize,
}

impl TaskConfig {
    pub fn is_conditional(&self) -> bool {
        self.name == REACH_TASK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub frequencies: usize,
    pub step_conditioned: bool,
}

impl NetSpec {
    pub fn resolve(&self, x_dim: usize, cond_dim: usize) -> NetConfig {
        NetConfig {
            x_dim,
            cond_dim,
            hidden: self.hidden.clone(),
            frequencies: self.frequencies,
            step_conditioned: self.step_conditioned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookConfig {
    pub enabled: bool,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Share of each batch in the consistency partition: 0 (plain flow
    /// matching) or within [`CONS_FRACTION_RANGE`].
    pub cons_fraction: f64,
    pub schedule: StepSchedule,
    /// Query the finest dyadic step with `d = 0` during rollouts.
    pub finest_step_instantaneous: bool,
    pub aga: AgaConfig,
    pub codebook: CodebookConfig,
    pub net: NetSpec,
    pub seeds: Seeds,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.task.name != REACH_TASK && self.task.name.parse::<ToyDistribution>().is_err() {
            return Err(Error::UnknownDataset(self.task.name.clone()));
        }
        if self.task.size == 0 {
            return bad("task.size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        self.optimizer.validate()?;
        let f = self.cons_fraction;
        let (lo, hi) = CONS_FRACTION_RANGE;
        if !(f == 0.0 || (lo..=hi).contains(&f)) {
            return bad(format!("cons_fraction = {f} must be 0 or in [{lo}, {hi}]"));
        }
        self.schedule.validate()?;
        self.aga.validate()?;
        if self.codebook.size == 0 {
            return bad("codebook.size must be >= 1".into());
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return bad("net.hidden needs at least one nonzero layer width".into());
        }
        if self.net.frequencies == 0 {
            return bad("net.frequencies must be >= 1".into());
        }
        if f > 0.0 && !self.net.step_conditioned {
            return bad("consistency training needs net.step_conditioned = true".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Optimizer steps per epoch for a dataset of `n` rows (last batch may
    /// be short).
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// The same run trained as a plain flow-matching baseline: no
    /// consistency partition, no allocation, no step input, Gaussian noise.
    pub fn plain_baseline(&self) -> Self {
        let mut cfg = self.clone();
        cfg.cons_fraction = 0.0;
        cfg.aga.enabled = false;
        cfg.net.step_conditioned = false;
        cfg.codebook.enabled = false;
        cfg
    }
}

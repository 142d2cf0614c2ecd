//! Task data, sampling from trained models, and evaluation reports.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, REACH_TASK};
use crate::diff::Array;
use crate::error::{Error, Result};
use crate::flow::{draw_noise_batch, sample, Codebook};
use crate::metrics::energy_distance;
use crate::net::VelocityModel;
use crate::tasks::{
    collect_demos, make_dataset, rollout_policy, Dataset, ExpertPolicy, FlowPolicy, ReachEnv,
};

/// Generated and held-out set size for the energy distance.
pub const EVAL_SAMPLES: usize = 4096;
/// Episodes per NFE on the reach task.
pub const EVAL_EPISODES: usize = 100;
/// Added to the data seed to draw held-out samples disjoint from training.
pub const HELDOUT_SEED_OFFSET: u64 = 0x9e37_79b9;

/// Training data for `config.task`.
pub fn task_dataset(config: &TrainConfig) -> Result<Dataset> {
    if config.task.name == REACH_TASK {
        let demos = collect_demos(
            &ReachEnv::default(),
            &ExpertPolicy::default(),
            config.task.size,
            config.seeds.data,
        )?;
        Ok(demos.dataset)
    } else {
        make_dataset(&config.task.name, config.task.size, config.seeds.data)
    }
}

pub fn codebook_for(config: &TrainConfig, dim: usize) -> Option<Codebook> {
    config
        .codebook
        .enabled
        .then(|| Codebook::new(config.codebook.size, dim, config.codebook.seed))
}

/// `count` samples with `steps` Euler steps; noise comes from the codebook
/// when one is given. Conditional models need one condition row per sample.
pub fn generate(
    model: &VelocityModel,
    codebook: Option<&Codebook>,
    cond: Option<&Array>,
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<Array> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = draw_noise_batch(codebook, count, model.config().x_dim, &mut rng);
    sample(model, &x0, cond, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMetric {
    EnergyDistance,
    SuccessRate,
}

impl EvalMetric {
    pub fn name(self) -> &'static str {
        match self {
            EvalMetric::EnergyDistance => "energy-distance",
            EvalMetric::SuccessRate => "success-rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub nfe: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: EvalMetric,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn value_at(&self, nfe: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.nfe == nfe).map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,metric,nfe,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.task,
                self.metric.name(),
                r.nfe,
                r.value
            ));
        }
        out
    }
}

/// Evaluates `model` (trained under `config`) at each NFE in `steps`:
/// energy distance to fresh held-out data for toy tasks, closed-loop
/// success rate for the reach task.
pub fn evaluate(
    model: &VelocityModel,
    config: &TrainConfig,
    steps: &[usize],
    seed: u64,
) -> Result<EvalReport> {
    if steps.is_empty() || steps.contains(&0) {
        return Err(Error::InvalidArgument(format!("bad NFE list {steps:?}")));
    }
    let conditional = config.task.is_conditional();
    if conditional != (model.config().cond_dim > 0) {
        return Err(Error::Config(format!(
            "checkpoint (cond_dim {}) does not fit task {}",
            model.config().cond_dim,
            config.task.name
        )));
    }
    let codebook = codebook_for(config, model.config().x_dim);
    let mut rows = Vec::with_capacity(steps.len());
    if conditional {
        let env = ReachEnv::default();
        if model.config().x_dim != env.chunk_dim() {
            return Err(Error::Config(format!(
                "checkpoint x_dim {} does not match the reach chunk size {}",
                model.config().x_dim,
                env.chunk_dim()
            )));
        }
        for &n in steps {
            let mut policy = FlowPolicy {
                model,
                steps: n,
                codebook: codebook.as_ref(),
            };
            let value = rollout_policy(&env, &mut policy, EVAL_EPISODES, seed)?;
            rows.push(EvalRow { nfe: n, value });
        }
    } else {
        let heldout = make_dataset(
            &config.task.name,
            EVAL_SAMPLES,
            config.seeds.data.wrapping_add(HELDOUT_SEED_OFFSET),
        )?;
        if model.config().x_dim != heldout.dim() {
            return Err(Error::Config(format!(
                "checkpoint x_dim {} does not match task {}",
                model.config().x_dim,
                config.task.name
            )));
        }
        for &n in steps {
            let gen = generate(model, codebook.as_ref(), None, EVAL_SAMPLES, n, seed)?;
            let value = energy_distance(&gen, &heldout.samples)?;
            rows.push(EvalRow { nfe: n, value });
        }
    }
    Ok(EvalReport {
        task: config.task.name.clone(),
        metric: if conditional {
            EvalMetric::SuccessRate
        } else {
            EvalMetric::EnergyDistance
        },
        seed,
        rows,
    })
}

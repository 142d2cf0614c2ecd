//! The training loop: batch split, the two losses and their gradients,
//! gradient allocation, optimizer step, per-step diagnostics.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::aga::{AgaState, Allocation, Branch};
use crate::diff::{Array, GradVector};
use crate::error::{Error, Result};
use crate::flow::{fm_loss, mc_loss, rollout_targets, BatchBuilder, Codebook};
use crate::net::VelocityModel;
use crate::optim::Optimizer;
use crate::tasks::Dataset;

pub const METRICS_HEADER: [&str; 11] = [
    "step",
    "epoch",
    "loss_fm",
    "loss_mc",
    "alpha1",
    "c",
    "delta",
    "A",
    "B",
    "branch",
    "wall_time",
];

/// One optimizer step's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub epoch: usize,
    pub loss_fm: f64,
    pub loss_mc: f64,
    pub alpha1: f64,
    pub c: f64,
    pub delta: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub branch: Branch,
    /// Seconds since training started.
    pub wall_time: f64,
}

/// Streams [`MetricsRow`]s as CSV with the fixed [`METRICS_HEADER`].
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        inner.write_record(METRICS_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("metrics log", e))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Training state for one run. Everything random is drawn from one
/// generator seeded by `seeds.train`, so a run is a pure function of the
/// config and the dataset.
pub struct Trainer {
    config: TrainConfig,
    model: VelocityModel,
    optimizer: Optimizer,
    aga: AgaState,
    builder: BatchBuilder,
    rng: ChaCha8Rng,
    step: usize,
    epoch: usize,
    total_steps: usize,
    pending_losses: Option<(f64, f64)>,
    started: Instant,
}

impl Trainer {
    pub fn new(config: &TrainConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        if config.task.is_conditional() != data.conditions.is_some() {
            return Err(Error::Config(format!(
                "task {} does not match dataset {:?}",
                config.task.name, data.meta.name
            )));
        }
        let net = config.net.resolve(data.dim(), data.cond_dim());
        let model = VelocityModel::init(net, config.seeds.init);
        let optimizer = config.optimizer.build(model.param_count());
        let codebook = config
            .codebook
            .enabled
            .then(|| Codebook::new(config.codebook.size, data.dim(), config.codebook.seed));
        Ok(Self {
            config: config.clone(),
            optimizer,
            aga: AgaState::new(&config.aga),
            builder: BatchBuilder {
                fraction: config.cons_fraction,
                codebook,
                finest_step_instantaneous: config.finest_step_instantaneous,
            },
            rng: ChaCha8Rng::seed_from_u64(config.seeds.train),
            step: 0,
            epoch: 0,
            total_steps: config.epochs * config.steps_per_epoch(data.len()),
            pending_losses: None,
            model,
            started: Instant::now(),
        })
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn aga(&self) -> &AgaState {
        &self.aga
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// One optimizer step on the rows `x1` (and conditions).
    pub fn step(&mut self, x1: &Array, cond: Option<&Array>) -> Result<MetricsRow> {
        let progress = self.step as f64 / self.total_steps.max(1) as f64;
        let n = self.config.schedule.step_count(progress, &mut self.rng);
        let batch = self.builder.build(x1, cond, n, &mut self.rng)?;

        let (loss_fm, g1) = {
            let rec = fm_loss(&self.model, &batch.fm)?;
            (rec.value(), rec.gradient()?)
        };
        let (loss_mc, g2) = if batch.cons.is_empty() {
            (0.0, GradVector::zeros(self.model.param_count()))
        } else {
            let targets = rollout_targets(&self.model, &batch.cons)?;
            let rec = mc_loss(&self.model, &batch.cons, &targets)?;
            (rec.value(), rec.gradient()?)
        };
        if !g1.all_finite() || !g2.all_finite() {
            return Err(Error::NonFinite(format!("gradient at step {}", self.step)));
        }

        let alloc = if self.config.aga.enabled {
            self.aga.combine(&g1, &g2, self.pending_losses.take())?
        } else {
            Allocation::sum(&g1, &g2, self.aga.c)?
        };
        self.optimizer
            .step(self.model.params_mut(), &alloc.direction);
        if !self.model.params().all_finite() {
            return Err(Error::NonFinite(format!(
                "parameters after step {}",
                self.step
            )));
        }

        let row = MetricsRow {
            step: self.step,
            epoch: self.epoch,
            loss_fm,
            loss_mc,
            alpha1: alloc.alpha1,
            c: alloc.c,
            delta: alloc.stats.delta,
            a: alloc.stats.a,
            b: alloc.stats.b,
            branch: alloc.branch,
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        self.step += 1;
        Ok(row)
    }

    /// One pass over `data` in a fresh random order. The epoch's mean
    /// losses feed the next epoch's first allocation.
    pub fn run_epoch(
        &mut self,
        data: &Dataset,
        mut on_step: impl FnMut(&MetricsRow) -> Result<()>,
    ) -> Result<()> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut sum_fm, mut sum_mc, mut count) = (0.0, 0.0, 0usize);
        for idx in order.chunks(self.config.batch_size) {
            let x1 = data.samples.gather_rows(idx);
            let cond = data.conditions.as_ref().map(|c| c.gather_rows(idx));
            let row = self.step(&x1, cond.as_ref())?;
            sum_fm += row.loss_fm;
            sum_mc += row.loss_mc;
            count += 1;
            on_step(&row)?;
        }
        self.pending_losses = Some((sum_fm / count as f64, sum_mc / count as f64));
        self.epoch += 1;
        Ok(())
    }

    pub fn into_parts(self) -> (VelocityModel, AgaState) {
        (self.model, self.aga)
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: VelocityModel,
    pub aga: AgaState,
    pub metrics: Vec<MetricsRow>,
}

/// Trains for `config.epochs` epochs, collecting every metrics row.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, data)?;
    let mut metrics = Vec::new();
    while !trainer.is_done() {
        trainer.run_epoch(data, |row| {
            metrics.push(row.clone());
            Ok(())
        })?;
    }
    let (model, aga) = trainer.into_parts();
    Ok(TrainOutcome {
        model,
        aga,
        metrics,
    })
}

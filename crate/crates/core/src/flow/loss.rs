use super::batch::{ConsBatch, FmBatch};
use super::rollout::RolloutTargets;
use crate::diff::{Array, GradVector, NodeId, Tape};
use crate::error::{Error, Result};
use crate::net::VelocityModel;

/// A scalar loss together with the tape it was computed on.
pub struct LossRecord<'p> {
    value: f64,
    recorded: Option<(Tape<'p>, NodeId)>,
    param_count: usize,
}

impl<'p> LossRecord<'p> {
    fn empty(param_count: usize) -> Self {
        Self {
            value: 0.0,
            recorded: None,
            param_count,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// d(loss)/d(params); all zeros for an empty partition.
    pub fn gradient(&self) -> Result<GradVector> {
        match &self.recorded {
            Some((tape, root)) => tape.backward(*root, 1.0),
            None => Ok(GradVector::zeros(self.param_count)),
        }
    }
}

/// `sum(residual^2) / rows` on a fresh tape.
fn squared_error<'p>(
    model: &'p VelocityModel,
    x: &Array,
    cond: Option<&Array>,
    t: &[f64],
    d: &[f64],
    target: &Array,
    rows: usize,
) -> Result<LossRecord<'p>> {
    let mut tape = Tape::new(model.params());
    let pred = model.record(&mut tape, x, cond, t, d)?;
    if tape.shape(pred) != target.shape() {
        return Err(Error::InvalidArgument(format!(
            "prediction {:?} vs target {:?}",
            tape.shape(pred),
            target.shape()
        )));
    }
    let tgt = tape.constant(target.clone());
    let resid = tape.sub(pred, tgt)?;
    let sq = tape.square(resid);
    let total = tape.sum(sq);
    let root = tape.scale(total, 1.0 / rows as f64);
    let value = tape.value(root).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(LossRecord {
        value,
        recorded: Some((tape, root)),
        param_count: model.param_count(),
    })
}

/// Mean over the partition of `|v(x_t, o, t, 0) - (x1 - x0)|^2`.
pub fn fm_loss<'p>(model: &'p VelocityModel, batch: &FmBatch) -> Result<LossRecord<'p>> {
    if batch.is_empty() {
        return Ok(LossRecord::empty(model.param_count()));
    }
    let zeros = vec![0.0; batch.len()];
    squared_error(
        model,
        &batch.x_t,
        batch.cond.as_ref(),
        &batch.t,
        &zeros,
        &batch.target,
        batch.len(),
    )
}

/// Mean over entries and over `k = 2..=n` of `|v(x_t, o, t, k d) - target_k|^2`.
pub fn mc_loss<'p>(
    model: &'p VelocityModel,
    batch: &ConsBatch,
    targets: &RolloutTargets,
) -> Result<LossRecord<'p>> {
    if batch.is_empty() {
        return Ok(LossRecord::empty(model.param_count()));
    }
    if targets.n != batch.n {
        return Err(Error::InvalidArgument(format!(
            "targets built for n={} but batch has n={}",
            targets.n, batch.n
        )));
    }
    let n = batch.n;
    let rows = batch.len();
    let mut xs = Vec::with_capacity(n - 1);
    let mut conds = Vec::with_capacity(n - 1);
    let mut ts = Vec::with_capacity(rows * (n - 1));
    let mut ds = Vec::with_capacity(rows * (n - 1));
    for k in 2..=n {
        xs.push(&batch.x_t);
        if let Some(c) = &batch.cond {
            conds.push(c);
        }
        ts.extend_from_slice(&batch.t);
        ds.extend(batch.d.iter().map(|d| k as f64 * d));
    }
    let x = Array::vstack(&xs)?;
    let cond = if conds.is_empty() {
        None
    } else {
        Some(Array::vstack(&conds)?)
    };
    let tgt_parts: Vec<&Array> = targets.averages.iter().collect();
    let target = Array::vstack(&tgt_parts)?;
    squared_error(model, &x, cond.as_ref(), &ts, &ds, &target, rows * (n - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    fn tiny(x_dim: usize) -> VelocityModel {
        let mut cfg = NetConfig::new(x_dim, 0);
        cfg.hidden = vec![8];
        VelocityModel::init(cfg, 0)
    }

    fn set_output_bias(model: &mut VelocityModel, bias: &[f64]) {
        let total = model.param_count();
        let p = model.params_mut().as_mut_slice();
        p[total - bias.len()..].copy_from_slice(bias);
    }

    #[test]
    fn fm_loss_of_zero_field() {
        let model = tiny(1);
        let batch = FmBatch {
            x_t: Array::matrix(1, 1, vec![0.3]),
            cond: None,
            t: vec![0.4],
            target: Array::matrix(1, 1, vec![2.0]),
        };
        assert_eq!(fm_loss(&model, &batch).unwrap().value(), 4.0);
    }

    #[test]
    fn fm_loss_vanishes_on_exact_prediction() {
        let mut model = tiny(2);
        set_output_bias(&mut model, &[1.0, -3.0]);
        let batch = FmBatch {
            x_t: Array::matrix(1, 2, vec![0.3, 0.1]),
            cond: None,
            t: vec![0.4],
            target: Array::matrix(1, 2, vec![1.0, -3.0]),
        };
        let rec = fm_loss(&model, &batch).unwrap();
        assert_eq!(rec.value(), 0.0);
        assert!(rec.gradient().unwrap().as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_partition_is_zero() {
        let model = tiny(2);
        let batch = FmBatch {
            x_t: Array::matrix(0, 2, vec![]),
            cond: None,
            t: vec![],
            target: Array::matrix(0, 2, vec![]),
        };
        let rec = fm_loss(&model, &batch).unwrap();
        assert_eq!(rec.value(), 0.0);
        assert_eq!(
            rec.gradient().unwrap(),
            GradVector::zeros(model.param_count())
        );
    }

    #[test]
    fn mc_loss_single_entry_arithmetic() {
        let mut model = tiny(1);
        set_output_bias(&mut model, &[1.0]);
        let batch = ConsBatch {
            x_t: Array::matrix(1, 1, vec![0.0]),
            cond: None,
            t: vec![0.0],
            d: vec![0.25],
            rollout_d: vec![0.25],
            n: 2,
        };
        let targets = RolloutTargets {
            steps: vec![],
            averages: vec![Array::matrix(1, 1, vec![0.5])],
            n: 2,
        };
        assert_eq!(mc_loss(&model, &batch, &targets).unwrap().value(), 0.25);
    }
}

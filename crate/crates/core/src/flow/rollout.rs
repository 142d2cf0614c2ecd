use super::batch::ConsBatch;
use crate::diff::Array;
use crate::error::Result;
use crate::net::VelocityField;

/// Small-step velocities along one Euler rollout and the averaged
/// large-step targets built from them.
#[derive(Debug, Clone)]
pub struct RolloutTargets {
    /// `steps[i]` is `v(x_{t+i d}, t + i d, d)` for `i = 0..n`, one row per entry.
    pub steps: Vec<Array>,
    /// `averages[k - 2]` is the prefix mean `(1/k) sum_{i<k} steps[i]`
    /// for `k = 2..=n`: the target for `v(x_t, t, k d)`.
    pub averages: Vec<Array>,
    pub n: usize,
}

impl RolloutTargets {
    pub fn target(&self, k: usize) -> &Array {
        &self.averages[k - 2]
    }
}

/// Rolls `field` forward `n` Euler steps of size `d` from every start point
/// in `batch` and forms the prefix-mean targets. The field is only
/// evaluated, never differentiated, so the targets are constants with
/// respect to whatever parameters are being trained.
pub fn rollout_targets<F: VelocityField + ?Sized>(
    field: &F,
    batch: &ConsBatch,
) -> Result<RolloutTargets> {
    batch.check()?;
    let n = batch.n;
    let mut x = batch.x_t.clone();
    let mut t = batch.t.clone();
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let v = field.velocity(&x, batch.cond.as_ref(), &t, &batch.rollout_d)?;
        if i + 1 < n {
            for (r, (tr, &d)) in t.iter_mut().zip(&batch.d).enumerate() {
                for (xv, vv) in x.row_mut(r).iter_mut().zip(v.row(r)) {
                    *xv += vv * d;
                }
                *tr += d;
            }
        }
        steps.push(v);
    }

    let mut averages = Vec::with_capacity(n.saturating_sub(1));
    let mut running = steps[0].clone();
    for (k, step) in steps.iter().enumerate().skip(1) {
        running.axpy(1.0, step);
        let count = (k + 1) as f64;
        averages.push(running.map(|s| s / count));
    }
    Ok(RolloutTargets { steps, averages, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    struct Constant(Vec<f64>);
    impl VelocityField for Constant {
        fn x_dim(&self) -> usize {
            self.0.len()
        }
        fn velocity(&self, x: &Array, _: Option<&Array>, _: &[f64], _: &[f64]) -> Result<Array> {
            Ok(Array::matrix(
                x.rows(),
                self.0.len(),
                self.0.repeat(x.rows()),
            ))
        }
    }

    struct Identity;
    impl VelocityField for Identity {
        fn x_dim(&self) -> usize {
            1
        }
        fn velocity(&self, x: &Array, _: Option<&Array>, _: &[f64], _: &[f64]) -> Result<Array> {
            Ok(x.clone())
        }
    }

    fn batch(x: Vec<f64>, dim: usize, t: f64, d: f64, n: usize) -> ConsBatch {
        let rows = x.len() / dim;
        ConsBatch {
            x_t: Array::matrix(rows, dim, x),
            cond: None,
            t: vec![t; rows],
            d: vec![d; rows],
            rollout_d: vec![d; rows],
            n,
        }
    }

    #[test]
    fn constant_field_targets_are_the_constant() {
        let field = Constant(vec![1.5, -2.0]);
        let b = batch(vec![0.1, 0.2, -0.3, 0.4], 2, 0.0, 0.125, 8);
        let r = rollout_targets(&field, &b).unwrap();
        for k in 2..=8 {
            for row in 0..2 {
                assert_eq!(r.target(k).row(row), &[1.5, -2.0]);
            }
        }
    }

    #[test]
    fn linear_field_two_step_average() {
        let (x, d) = (0.8, 0.25);
        let r = rollout_targets(&Identity, &batch(vec![x], 1, 0.25, d, 2)).unwrap();
        // x_{t+d} = x (1 + d); average of x and x (1 + d)
        assert_eq!(r.steps[1].data()[0], x * (1.0 + d));
        assert!((r.target(2).data()[0] - x * (1.0 + d / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_rollouts_past_the_end() {
        let b = batch(vec![0.0], 1, 0.75, 0.25, 2);
        assert!(matches!(
            rollout_targets(&Identity, &b),
            Err(Error::InvalidArgument(_))
        ));
        let b = batch(vec![0.0], 1, 0.0, 0.25, 1);
        assert!(rollout_targets(&Identity, &b).is_err());
    }
}

use crate::diff::Array;
use crate::error::{Error, Result};
use crate::net::VelocityField;

/// Step-conditioned Euler sampling on the uniform grid `d = 1/steps`:
/// `x <- x + v(x, o, t, d) d` for `t = 0, d, ..., 1 - d`.
pub fn sample<F: VelocityField + ?Sized>(
    field: &F,
    x0: &Array,
    cond: Option<&Array>,
    steps: usize,
) -> Result<Array> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "sampler needs at least one step".into(),
        ));
    }
    let rows = x0.rows();
    let d = 1.0 / steps as f64;
    let dvec = vec![d; rows];
    let mut x = x0.clone();
    for i in 0..steps {
        // i * d can overshoot 1 - d by an ulp for non-dyadic d
        let t = (i as f64 * d).min(1.0);
        let v = field.velocity(&x, cond, &vec![t; rows], &dvec)?;
        x.axpy(d, &v);
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("sampled state".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl VelocityField for Decay {
        fn x_dim(&self) -> usize {
            2
        }
        fn velocity(&self, x: &Array, _: Option<&Array>, _: &[f64], _: &[f64]) -> Result<Array> {
            Ok(x.map(|v| -v))
        }
    }

    struct Constant(f64);
    impl VelocityField for Constant {
        fn x_dim(&self) -> usize {
            2
        }
        fn velocity(&self, x: &Array, _: Option<&Array>, _: &[f64], _: &[f64]) -> Result<Array> {
            Ok(Array::full(x.shape(), self.0))
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let x0 = Array::matrix(1, 2, vec![1.0, 2.0]);
        assert!(sample(&Decay, &x0, None, 0).is_err());
    }

    #[test]
    fn single_step_on_decay_field_hits_zero() {
        let x0 = Array::matrix(2, 2, vec![1.0, -2.0, 3.5, 0.25]);
        let x1 = sample(&Decay, &x0, None, 1).unwrap();
        assert!(x1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn four_steps_on_decay_field() {
        let x0 = Array::matrix(1, 2, vec![1.0, -2.0]);
        let x1 = sample(&Decay, &x0, None, 4).unwrap();
        for (a, b) in x1.data().iter().zip(x0.data()) {
            assert!((a - b * 0.75f64.powi(4)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_field_adds_the_constant() {
        let x0 = Array::matrix(1, 2, vec![0.5, -0.5]);
        for n in [1, 2, 3, 7, 32] {
            let x1 = sample(&Constant(0.5), &x0, None, n).unwrap();
            assert!((x1.data()[0] - 1.0).abs() < 1e-14);
            assert!(x1.data()[1].abs() < 1e-14);
        }
    }
}

//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use msflow::diff::{Array, GradVector};
use msflow::net::{NetConfig, VelocityField, VelocityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-8;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

pub fn randn(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_model(cfg: NetConfig, rng: &mut ChaCha8Rng) -> VelocityModel {
    let n = VelocityModel::init(cfg.clone(), 0).param_count();
    VelocityModel::from_params(cfg, GradVector::from_vec(randn(rng, n, 0.4))).unwrap()
}

pub fn with_params(model: &VelocityModel, p: Vec<f64>) -> VelocityModel {
    VelocityModel::from_params(model.config().clone(), GradVector::from_vec(p)).unwrap()
}

/// Largest relative error between `grad` and central differences of `loss`
/// over every parameter, with the index where it occurs.
pub fn worst_fd_error(
    model: &VelocityModel,
    grad: &GradVector,
    loss: impl Fn(&VelocityModel) -> f64,
) -> (f64, usize) {
    let base = model.params().as_slice().to_vec();
    let mut worst = (0.0f64, 0);
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        let up = loss(&with_params(model, p.clone()));
        p[i] = base[i] - H;
        let down = loss(&with_params(model, p));
        let fd = (up - down) / (2.0 * H);
        let e = rel_err(grad.as_slice()[i], fd);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

pub fn architectures() -> Vec<NetConfig> {
    vec![
        NetConfig {
            x_dim: 2,
            cond_dim: 0,
            hidden: vec![7],
            frequencies: 2,
            step_conditioned: true,
        },
        NetConfig {
            x_dim: 3,
            cond_dim: 4,
            hidden: vec![6, 5],
            frequencies: 3,
            step_conditioned: true,
        },
        NetConfig {
            x_dim: 4,
            cond_dim: 2,
            hidden: vec![5, 4, 6],
            frequencies: 1,
            step_conditioned: false,
        },
    ]
}

/// `v = -x`.
pub struct Decay;

impl VelocityField for Decay {
    fn x_dim(&self) -> usize {
        0
    }

    fn velocity(
        &self,
        x: &Array,
        _: Option<&Array>,
        _: &[f64],
        _: &[f64],
    ) -> msflow::Result<Array> {
        Ok(x.map(|v| -v))
    }
}

/// The same velocity everywhere.
pub struct Constant(pub Vec<f64>);

impl VelocityField for Constant {
    fn x_dim(&self) -> usize {
        self.0.len()
    }

    fn velocity(
        &self,
        x: &Array,
        _: Option<&Array>,
        _: &[f64],
        _: &[f64],
    ) -> msflow::Result<Array> {
        let data = (0..x.rows()).flat_map(|_| self.0.iter().copied()).collect();
        Ok(Array::matrix(x.rows(), self.0.len(), data))
    }
}

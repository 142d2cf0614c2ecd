//! Optimizers applied to an externally supplied update direction.

use serde::{Deserialize, Serialize};

use crate::diff::GradVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step along `direction` (a gradient-like vector).
    pub fn step(&mut self, params: &mut GradVector, direction: &GradVector) {
        debug_assert_eq!(params.len(), direction.len());
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let p = params.as_mut_slice();
        for (i, &g) in direction.as_slice().iter().enumerate() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            if weight_decay > 0.0 {
                p[i] -= lr * weight_decay * p[i];
            }
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
}

/// Heavy-ball SGD: `m <- mu m + g`, `p <- p - lr m`.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    m: Vec<f64>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut GradVector, direction: &GradVector) {
        debug_assert_eq!(params.len(), direction.len());
        let p = params.as_mut_slice();
        for (i, &g) in direction.as_slice().iter().enumerate() {
            self.m[i] = self.cfg.momentum * self.m[i] + g;
            p[i] -= self.cfg.lr * self.m[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
    SgdMomentum {
        lr: f64,
        momentum: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig::Adam {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::SgdMomentum { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("optimizer: {what}")));
        let lr = self.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return bad("lr must be positive");
        }
        match *self {
            OptimizerConfig::Adam {
                beta1,
                beta2,
                eps,
                weight_decay,
                ..
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return bad("betas must lie in [0, 1)");
                }
                if eps.is_nan() || eps <= 0.0 || weight_decay.is_nan() || weight_decay < 0.0 {
                    return bad("eps must be positive and weight_decay non-negative");
                }
            }
            OptimizerConfig::SgdMomentum { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad("momentum must lie in [0, 1)");
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, len: usize) -> Optimizer {
        match *self {
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => Optimizer::Adam(Adam::new(
                AdamConfig {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                },
                len,
            )),
            OptimizerConfig::SgdMomentum { lr, momentum } => {
                Optimizer::Sgd(Sgd::new(SgdConfig { lr, momentum }, len))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut GradVector, direction: &GradVector) {
        match self {
            Optimizer::Adam(o) => o.step(params, direction),
            Optimizer::Sgd(o) => o.step(params, direction),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = GradVector::from_vec(vec![1.0, -1.0]);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            2,
        );
        opt.step(&mut p, &GradVector::from_vec(vec![3.0, -0.5]));
        assert!((p.as_slice()[0] - 0.9).abs() < 1e-6);
        assert!((p.as_slice()[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = GradVector::from_vec(vec![2.0, -3.0]);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            2,
        );
        for _ in 0..2000 {
            let g = p.scaled(2.0);
            opt.step(&mut p, &g);
        }
        assert!(p.norm() < 1e-2);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = GradVector::from_vec(vec![0.0]);
        let mut opt = Sgd::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.5,
            },
            1,
        );
        let g = GradVector::from_vec(vec![1.0]);
        opt.step(&mut p, &g);
        opt.step(&mut p, &g);
        assert!((p.as_slice()[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn optimizer_config_parses_and_validates() {
        let c: OptimizerConfig =
            serde_json::from_str(r#"{"kind":"sgd-momentum","lr":0.01,"momentum":0.9}"#).unwrap();
        assert!(c.validate().is_ok());
        let c: OptimizerConfig =
            serde_json::from_str(r#"{"kind":"sgd-momentum","lr":-1,"momentum":0.9}"#).unwrap();
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<OptimizerConfig>(
            r#"{"kind":"sgd-momentum","lr":0.01,"momentum":0.9,"nesterov":true}"#
        )
        .is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }
}

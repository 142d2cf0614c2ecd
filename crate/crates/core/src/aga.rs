//! Adaptive gradient allocation between the flow-matching gradient `g1` and
//! the multi-step consistency gradient `g2`.
//!
//! The composite `g = a1 g1 + a2 g2` (`a1 + a2 = 1`) is chosen so that its
//! projections on the unit directions satisfy `c (g . u1) = g . u2`. The
//! ratio `c` adapts to the relative descent rates of the two losses, is
//! smoothed by an EMA, and is only used while the resulting `a1` lies in
//! `(0, 1)`; otherwise both weights fall back to 0.5. The first `n_start`
//! steps use PCGrad instead.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diff::GradVector;
use crate::error::{Error, Result};

/// Floor for the previous-loss registers.
pub const LOSS_FLOOR: f64 = 1e-12;
/// Bounds on `v2 / v1` before the exponential update.
pub const RATE_RATIO_BOUNDS: (f64, f64) = (0.1, 10.0);
/// Upper clamp on `c`.
pub const C_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgaConfig {
    pub enabled: bool,
    pub c0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_start: usize,
}

impl Default for AgaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            c0: 1.0,
            beta: 0.9,
            gamma: 0.1,
            n_start: 0,
        }
    }
}

impl AgaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0 <= C_MAX) {
            return Err(Error::Config(format!("aga.c0 = {} not in (0, 1]", self.c0)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "aga.beta = {} not in (0, 1)",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "aga.gamma = {} must be > 0",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Norms and cosine of a gradient pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradPairStats {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl GradPairStats {
    pub fn of(g1: &GradVector, g2: &GradVector) -> Self {
        let a = g1.norm();
        let b = g2.norm();
        let delta = if a > 0.0 && b > 0.0 {
            (g1.dot(g2) / (a * b)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Self { a, b, delta }
    }
}

/// Closed-form weights `(a1, a2)` for the projection ratio `c`:
/// `a1 = B (1 - c delta) / (A (c - delta) + B (1 - c delta))`.
/// `None` when the denominator vanishes.
pub fn alpha_closed_form(a: f64, b: f64, delta: f64, c: f64) -> Option<(f64, f64)> {
    let num = b * (1.0 - c * delta);
    let den = a * (c - delta) + num;
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    let a1 = num / den;
    Some((a1, 1.0 - a1))
}

/// Admissible region for `c` given the gradient pair (derived from
/// `a1 in (0, 1)` under `c <= 1`).
pub fn c_validity(a: f64, b: f64, delta: f64, c: f64) -> bool {
    if delta <= 0.0 {
        return c > 0.0;
    }
    let lhs = a;
    let rhs = b * delta;
    if lhs < rhs {
        let upper = (a * delta - b) / (a - b * delta);
        delta < c && c < upper
    } else if lhs == rhs {
        c > delta.max(a / b)
    } else {
        let lower = (a * delta - b) / (a - b * delta);
        c > delta.max(lower)
    }
}

/// PCGrad: each gradient loses its component along the other when they
/// conflict. Projections use the original (unprojected) partner.
pub fn pcgrad_project(g1: &GradVector, g2: &GradVector) -> (GradVector, GradVector) {
    let dot = g1.dot(g2);
    let mut p1 = g1.clone();
    let mut p2 = g2.clone();
    if dot < 0.0 {
        let n2 = g2.norm_sq();
        if n2 > 0.0 {
            p1.axpy(-dot / n2, g2);
        }
        let n1 = g1.norm_sq();
        if n1 > 0.0 {
            p2.axpy(-dot / n1, g1);
        }
    }
    (p1, p2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// PCGrad warm start, equal weights.
    Warmstart,
    /// Closed-form weights with a valid `c`.
    Closed,
    /// `c` outside the admissible region, equal weights.
    Fallback,
    /// One gradient has zero norm, the other is used as is.
    Degenerate,
    /// Allocation disabled: plain sum `g1 + g2`.
    Sum,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Branch::Warmstart => "warmstart",
            Branch::Closed => "closed",
            Branch::Fallback => "fallback",
            Branch::Degenerate => "degenerate",
            Branch::Sum => "sum",
        };
        f.write_str(s)
    }
}

/// The update direction and the diagnostics that produced it.
#[derive(Debug, Clone)]
pub struct Allocation {
    pub direction: GradVector,
    pub alpha1: f64,
    pub alpha2: f64,
    pub c: f64,
    pub stats: GradPairStats,
    pub branch: Branch,
}

impl Allocation {
    /// Unweighted sum, used when allocation is switched off.
    pub fn sum(g1: &GradVector, g2: &GradVector, c: f64) -> Result<Self> {
        check_finite(g1, g2)?;
        Ok(Self {
            direction: GradVector::lincomb(1.0, g1, 1.0, g2),
            alpha1: 0.5,
            alpha2: 0.5,
            c,
            stats: GradPairStats::of(g1, g2),
            branch: Branch::Sum,
        })
    }
}

fn check_finite(g1: &GradVector, g2: &GradVector) -> Result<()> {
    if !g1.all_finite() {
        return Err(Error::NonFinite("flow-matching gradient".into()));
    }
    if !g2.all_finite() {
        return Err(Error::NonFinite("consistency gradient".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgaState {
    pub c: f64,
    pub beta: f64,
    pub gamma: f64,
    pub prev_loss_fm: Option<f64>,
    pub prev_loss_mc: Option<f64>,
    pub step: usize,
    pub n_start: usize,
}

impl AgaState {
    pub fn new(cfg: &AgaConfig) -> Self {
        Self {
            c: cfg.c0,
            beta: cfg.beta,
            gamma: cfg.gamma,
            prev_loss_fm: None,
            prev_loss_mc: None,
            step: 0,
            n_start: cfg.n_start,
        }
    }

    fn store(&mut self, loss_fm: f64, loss_mc: f64) {
        self.prev_loss_fm = Some(loss_fm.max(LOSS_FLOOR));
        self.prev_loss_mc = Some(loss_mc.max(LOSS_FLOOR));
    }

    /// Adapts `c` from the descent rates `v_i = L_i / L_i^prev`:
    /// `c_new = c exp(gamma (v2/v1 - 1))`, then `c <- beta c + (1 - beta) c_new`
    /// clamped to `(0, 1]`. The first call only fills the registers.
    pub fn update_c(&mut self, loss_fm: f64, loss_mc: f64) -> f64 {
        if let (Some(pf), Some(pm)) = (self.prev_loss_fm, self.prev_loss_mc) {
            let v1 = loss_fm / pf;
            let v2 = loss_mc / pm;
            let ratio = (v2 / v1.max(LOSS_FLOOR)).clamp(RATE_RATIO_BOUNDS.0, RATE_RATIO_BOUNDS.1);
            let c_new = self.c * (self.gamma * (ratio - 1.0)).exp();
            let c = self.beta * self.c + (1.0 - self.beta) * c_new;
            self.c = c.clamp(f64::MIN_POSITIVE, C_MAX);
        }
        self.store(loss_fm, loss_mc);
        self.c
    }

    /// Composes `g1` and `g2` into one update direction. `losses` carries a
    /// fresh `(L_FM, L_MC)` observation (per-epoch means) when one is
    /// available; `c` adapts only on those calls and only after warm start.
    pub fn combine(
        &mut self,
        g1: &GradVector,
        g2: &GradVector,
        losses: Option<(f64, f64)>,
    ) -> Result<Allocation> {
        if g1.len() != g2.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient lengths differ: {} vs {}",
                g1.len(),
                g2.len()
            )));
        }
        check_finite(g1, g2)?;
        if let Some((fm, mc)) = losses {
            if !fm.is_finite() || !mc.is_finite() {
                return Err(Error::NonFinite(format!("losses ({fm}, {mc})")));
            }
        }
        let warm = self.step < self.n_start;
        self.step += 1;

        if warm {
            if let Some((fm, mc)) = losses {
                self.store(fm, mc);
            }
            let (p1, p2) = pcgrad_project(g1, g2);
            return Ok(Allocation {
                direction: GradVector::lincomb(0.5, &p1, 0.5, &p2),
                alpha1: 0.5,
                alpha2: 0.5,
                c: self.c,
                stats: GradPairStats::of(g1, g2),
                branch: Branch::Warmstart,
            });
        }

        if let Some((fm, mc)) = losses {
            self.update_c(fm, mc);
        }
        let stats = GradPairStats::of(g1, g2);
        if stats.a == 0.0 || stats.b == 0.0 {
            let (direction, alpha1) = if stats.a == 0.0 {
                (g2.clone(), 0.0)
            } else {
                (g1.clone(), 1.0)
            };
            return Ok(Allocation {
                direction,
                alpha1,
                alpha2: 1.0 - alpha1,
                c: self.c,
                stats,
                branch: Branch::Degenerate,
            });
        }
        let closed = if c_validity(stats.a, stats.b, stats.delta, self.c) {
            alpha_closed_form(stats.a, stats.b, stats.delta, self.c)
                .filter(|(a1, _)| *a1 > 0.0 && *a1 < 1.0)
        } else {
            None
        };
        let (alpha1, alpha2, branch) = match closed {
            Some((a1, a2)) => (a1, a2, Branch::Closed),
            None => (0.5, 0.5, Branch::Fallback),
        };
        Ok(Allocation {
            direction: GradVector::lincomb(alpha1, g1, alpha2, g2),
            alpha1,
            alpha2,
            c: self.c,
            stats,
            branch,
        })
    }
}

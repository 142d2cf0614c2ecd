//! Step-size and time conditioned velocity network.
//!
//! A plain multilayer perceptron over `[x_t, o, emb(t), emb(d)]`, where
//! `emb(s) = [sin(pi 2^j s), cos(pi 2^j s)]` for `j = 0..frequencies`.
//! The `j = 0` pair is injective on `[0, 1]`, so distinct `t` or `d` values
//! always produce distinct features; `d = 0` maps to `[0, 1, 0, 1, ...]`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::{Array, GradVector, Graph, NodeId, ParamLayout, ParamSpec, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Flattened sample / action-chunk size (H * A for chunks).
    pub x_dim: usize,
    /// Observation size, 0 for unconditional tasks.
    pub cond_dim: usize,
    pub hidden: Vec<usize>,
    pub frequencies: usize,
    /// When false the network ignores `d` and always sees the `d = 0`
    /// embedding (plain flow matching).
    pub step_conditioned: bool,
}

impl NetConfig {
    pub fn new(x_dim: usize, cond_dim: usize) -> Self {
        Self {
            x_dim,
            cond_dim,
            hidden: vec![128, 128, 128],
            frequencies: 4,
            step_conditioned: true,
        }
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.frequencies
    }

    pub fn input_dim(&self) -> usize {
        self.x_dim + self.cond_dim + 2 * self.embed_dim()
    }
}

/// Sinusoidal features of a scalar in `[0, 1]`.
pub fn embed_scalar(s: f64, frequencies: usize, out: &mut Vec<f64>) {
    for j in 0..frequencies {
        let w = PI * (1u64 << j) as f64;
        out.push((w * s).sin());
        out.push((w * s).cos());
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(Error::OutOfRange { name, value: v });
    }
    Ok(())
}

/// Anything that maps a batch `(x, o, t, d)` to velocities of `x`'s shape.
pub trait VelocityField {
    fn x_dim(&self) -> usize;

    fn cond_dim(&self) -> usize {
        0
    }

    /// `x` is `B x x_dim`, `cond` is `B x cond_dim` when present, and
    /// `t`, `d` carry one entry per row.
    fn velocity(&self, x: &Array, cond: Option<&Array>, t: &[f64], d: &[f64]) -> Result<Array>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    config: NetConfig,
    layout: ParamLayout,
    layers: Vec<(ParamSpec, ParamSpec)>,
    params: GradVector,
}

impl VelocityModel {
    /// Fan-in scaled Gaussian weights, zero biases, zero final layer.
    pub fn init(config: NetConfig, seed: u64) -> Self {
        let (layout, layers) = Self::build_layout(&config);
        let mut params = GradVector::zeros(layout.total());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layers.len() - 1;
        for (i, (w, _)) in layers.iter().enumerate() {
            if i == last {
                continue;
            }
            let fan_in = w.shape[0] as f64;
            let normal = Normal::new(0.0, fan_in.sqrt().recip()).expect("valid std");
            for v in &mut params.as_mut_slice()[w.offset..w.offset + w.numel()] {
                *v = normal.sample(&mut rng);
            }
        }
        Self {
            config,
            layout,
            layers,
            params,
        }
    }

    pub fn from_params(config: NetConfig, params: GradVector) -> Result<Self> {
        let (layout, layers) = Self::build_layout(&config);
        if params.len() != layout.total() {
            return Err(Error::InvalidArgument(format!(
                "architecture needs {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(Self {
            config,
            layout,
            layers,
            params,
        })
    }

    fn build_layout(config: &NetConfig) -> (ParamLayout, Vec<(ParamSpec, ParamSpec)>) {
        let mut layout = ParamLayout::new();
        let mut widths = vec![config.input_dim()];
        widths.extend(&config.hidden);
        widths.push(config.x_dim);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = layout.push(format!("layer{i}.weight"), &[w[0], w[1]]);
                let bias = layout.push(format!("layer{i}.bias"), &[w[1]]);
                (weight, bias)
            })
            .collect();
        (layout, layers)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &GradVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut GradVector {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Feature matrix `[x, o, emb(t), emb(d)]` for a batch.
    pub fn features(&self, x: &Array, cond: Option<&Array>, t: &[f64], d: &[f64]) -> Result<Array> {
        let b = x.rows();
        let cfg = &self.config;
        if x.cols() != cfg.x_dim {
            return Err(Error::InvalidArgument(format!(
                "x has {} columns, model expects {}",
                x.cols(),
                cfg.x_dim
            )));
        }
        if t.len() != b || d.len() != b {
            return Err(Error::InvalidArgument(format!(
                "batch of {b} rows but {} times and {} step sizes",
                t.len(),
                d.len()
            )));
        }
        match (cond, cfg.cond_dim) {
            (None, 0) => {}
            (Some(o), c) if c > 0 && o.cols() == c && o.rows() == b => {}
            (Some(o), 0) if o.cols() == 0 => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "conditioning shape {:?} incompatible with cond_dim {}",
                    cond.map(|o| o.shape().to_vec()),
                    cfg.cond_dim
                )))
            }
        }
        let width = cfg.input_dim();
        let mut data = Vec::with_capacity(b * width);
        for i in 0..b {
            check_unit("t", t[i])?;
            check_unit("d", d[i])?;
            data.extend_from_slice(x.row(i));
            if let Some(o) = cond.filter(|_| cfg.cond_dim > 0) {
                data.extend_from_slice(o.row(i));
            }
            embed_scalar(t[i], cfg.frequencies, &mut data);
            let di = if cfg.step_conditioned { d[i] } else { 0.0 };
            embed_scalar(di, cfg.frequencies, &mut data);
        }
        Ok(Array::matrix(b, width, data))
    }

    /// Records the network on `tape` (which must borrow this model's
    /// parameters) and returns the `B x x_dim` output node.
    pub fn record(
        &self,
        tape: &mut Tape<'_>,
        x: &Array,
        cond: Option<&Array>,
        t: &[f64],
        d: &[f64],
    ) -> Result<NodeId> {
        let feats = self.features(x, cond, t, d)?;
        let input = tape.constant(feats);
        self.build(tape, &[input])
    }

    /// Batched evaluation without keeping the tape.
    pub fn evaluate_batch(
        &self,
        x: &Array,
        cond: Option<&Array>,
        t: &[f64],
        d: &[f64],
    ) -> Result<Array> {
        let mut tape = Tape::new(&self.params);
        let out = self.record(&mut tape, x, cond, t, d)?;
        let v = tape.value(out).clone();
        let v = v.reshape(x.shape().to_vec())?;
        if !v.all_finite() {
            return Err(Error::NonFinite("velocity output".into()));
        }
        Ok(v)
    }

    /// Single-sample evaluation: `x_t` is a flat `(x_dim,)` vector.
    pub fn evaluate(&self, x_t: &Array, cond: Option<&Array>, t: f64, d: f64) -> Result<Array> {
        let x = Array::matrix(1, x_t.len(), x_t.data().to_vec());
        let o = cond.map(|o| Array::matrix(1, o.len(), o.data().to_vec()));
        let v = self.evaluate_batch(&x, o.as_ref(), &[t], &[d])?;
        v.reshape(x_t.shape().to_vec())
    }
}

impl Graph for VelocityModel {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn build(&self, tape: &mut Tape<'_>, inputs: &[NodeId]) -> Result<NodeId> {
        let mut h = inputs[0];
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wn = tape.param(w)?;
            let bn = tape.param(b)?;
            let z = tape.matmul(h, wn)?;
            h = tape.add_row(z, bn)?;
            if i != last {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }
}

impl VelocityField for VelocityModel {
    fn x_dim(&self) -> usize {
        self.config.x_dim
    }

    fn cond_dim(&self) -> usize {
        self.config.cond_dim
    }

    fn velocity(&self, x: &Array, cond: Option<&Array>, t: &[f64], d: &[f64]) -> Result<Array> {
        self.evaluate_batch(x, cond, t, d)
    }
}

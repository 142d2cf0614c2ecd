//! Closed-form 2-D generators.
//!
//! - `two-moons`: two interleaved half circles, `theta ~ U[0, pi]`, upper arc
//!   `(cos, sin)`, lower arc `(1 - cos, 0.5 - sin)`, shifted by `(-0.5, -0.25)`,
//!   scaled by 0.8, plus Gaussian jitter (sd 0.05) clipped to +-0.1 per axis.
//!   Every sample lies within radius 1.5 of the origin.
//! - `gauss-mixture-8`: equal-weight isotropic Gaussians (sd 0.15) centred at
//!   `2 (cos 2 pi k/8, sin 2 pi k/8)`.
//! - `swiss-roll`: `u ~ U[1.5 pi, 4.5 pi]`, `(u cos u, u sin u) / (2.25 pi)`,
//!   plus Gaussian jitter (sd 0.05).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::Array;
use crate::error::{Error, Result};

pub const MIXTURE_MODES: usize = 8;
pub const MIXTURE_RADIUS: f64 = 2.0;
pub const MIXTURE_STD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyDistribution {
    TwoMoons,
    GaussMixture8,
    SwissRoll,
}

impl ToyDistribution {
    pub fn name(self) -> &'static str {
        match self {
            ToyDistribution::TwoMoons => "two-moons",
            ToyDistribution::GaussMixture8 => "gauss-mixture-8",
            ToyDistribution::SwissRoll => "swiss-roll",
        }
    }

    /// Centre of mixture component `k`.
    pub fn mixture_center(k: usize) -> [f64; 2] {
        let a = 2.0 * PI * k as f64 / MIXTURE_MODES as f64;
        [MIXTURE_RADIUS * a.cos(), MIXTURE_RADIUS * a.sin()]
    }

    fn draw<R: Rng>(self, rng: &mut R) -> [f64; 2] {
        match self {
            ToyDistribution::TwoMoons => {
                let jitter = Normal::new(0.0, 0.05).expect("valid sd");
                let theta = rng.random::<f64>() * PI;
                let (x, y) = if rng.random::<bool>() {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                let jx: f64 = jitter.sample(rng);
                let jx = jx.clamp(-0.1, 0.1);
                let jy: f64 = jitter.sample(rng);
                let jy = jy.clamp(-0.1, 0.1);
                [0.8 * (x - 0.5) + jx, 0.8 * (y - 0.25) + jy]
            }
            ToyDistribution::GaussMixture8 => {
                let noise = Normal::new(0.0, MIXTURE_STD).expect("valid sd");
                let c = Self::mixture_center(rng.random_range(0..MIXTURE_MODES));
                [c[0] + noise.sample(rng), c[1] + noise.sample(rng)]
            }
            ToyDistribution::SwissRoll => {
                let jitter = Normal::new(0.0, 0.05).expect("valid sd");
                let u = 1.5 * PI + 3.0 * PI * rng.random::<f64>();
                let s = 1.0 / (2.25 * PI);
                [
                    u * u.cos() * s + jitter.sample(rng),
                    u * u.sin() * s + jitter.sample(rng),
                ]
            }
        }
    }
}

impl fmt::Display for ToyDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-moons" => Ok(ToyDistribution::TwoMoons),
            "gauss-mixture-8" => Ok(ToyDistribution::GaussMixture8),
            "swiss-roll" => Ok(ToyDistribution::SwissRoll),
            other => Err(Error::UnknownDataset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Samples (`N x D`) with optional per-sample conditions (`N x C`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Array,
    pub conditions: Option<Array>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Array, conditions: Option<Array>, meta: DatasetMeta) -> Result<Self> {
        if samples.rank() != 2 || samples.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs N >= 1 rows, got shape {:?}",
                samples.shape()
            )));
        }
        if let Some(c) = &conditions {
            if c.rank() != 2 || c.rows() != samples.rows() {
                return Err(Error::InvalidArgument(format!(
                    "conditions {:?} do not match samples {:?}",
                    c.shape(),
                    samples.shape()
                )));
            }
        }
        if !samples.all_finite() || conditions.as_ref().is_some_and(|c| !c.all_finite()) {
            return Err(Error::NonFinite("dataset entries".into()));
        }
        Ok(Self {
            samples,
            conditions,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn cond_dim(&self) -> usize {
        self.conditions.as_ref().map_or(0, Array::cols)
    }
}

/// Generates `n` samples of a named toy distribution; deterministic in `seed`.
pub fn make_dataset(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    let dist: ToyDistribution = name.parse()?;
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        data.extend(dist.draw(&mut rng));
    }
    Dataset::new(
        Array::matrix(n, 2, data),
        None,
        DatasetMeta {
            name: dist.name().to_string(),
            seed,
            params: serde_json::json!({ "n": n }),
        },
    )
}

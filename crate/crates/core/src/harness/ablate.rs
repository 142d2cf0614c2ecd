//! Ablation grids: each grid point is trained with several seeds and
//! reported as mean and standard deviation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{evaluate, task_dataset, EvalMetric};
use super::train::train;
use crate::error::{Error, Result};
use crate::flow::StepSchedule;

pub const ABLATION_SEEDS: u64 = 3;
pub const NFE_GRID: [usize; 4] = [1, 3, 5, 10];
pub const INIT_C_GRID: [f64; 3] = [1.0, 0.5, 0.01];
pub const SCHEDULE_GRID: [&str; 6] = ["8", "4", "8-2", "4-2", "random", "4-8-2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    Schedule,
    InitC,
    Nfe,
    AgaOnoff,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Schedule => "schedule",
            AblationAxis::InitC => "init-c",
            AblationAxis::Nfe => "nfe",
            AblationAxis::AgaOnoff => "aga-onoff",
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schedule" => Ok(AblationAxis::Schedule),
            "init-c" => Ok(AblationAxis::InitC),
            "nfe" => Ok(AblationAxis::Nfe),
            "aga-onoff" => Ok(AblationAxis::AgaOnoff),
            other => Err(Error::Config(format!(
                "unknown ablation axis {other:?} (expected schedule, init-c, nfe or aga-onoff)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    /// One value per seed.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over seeds.
    pub std: f64,
}

impl AblationCell {
    fn new(label: String, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            label,
            values,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub task: String,
    pub metric: EvalMetric,
    /// Sampler steps used for every cell except on the `nfe` axis.
    pub nfe: usize,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    /// One row for the task, one column per grid point, cells `mean±std`.
    pub fn to_csv(&self) -> String {
        let labels: Vec<&str> = self.cells.iter().map(|c| c.label.as_str()).collect();
        let cells: Vec<String> = self
            .cells
            .iter()
            .map(|c| format!("{:.4}±{:.4}", c.mean, c.std))
            .collect();
        format!(
            "task,{}\n{},{}\n",
            labels.join(","),
            self.task,
            cells.join(",")
        )
    }

    /// Long form: one line per grid point and seed.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("axis,label,seed_index,value\n");
        for c in &self.cells {
            for (i, v) in c.values.iter().enumerate() {
                out.push_str(&format!("{},{},{i},{v}\n", self.axis, c.label));
            }
        }
        out
    }

    pub fn cell(&self, label: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.label == label)
    }
}

fn with_seed(base: &TrainConfig, s: u64) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.seeds.init = base.seeds.init.wrapping_add(s);
    cfg.seeds.train = base.seeds.train.wrapping_add(s);
    cfg
}

/// Grid points of `axis` as (label, config) pairs derived from `base`.
pub fn grid(base: &TrainConfig, axis: AblationAxis) -> Result<Vec<(String, TrainConfig)>> {
    let mut out = Vec::new();
    match axis {
        AblationAxis::Schedule => {
            for s in SCHEDULE_GRID {
                let mut cfg = base.clone();
                cfg.schedule = s.parse::<StepSchedule>()?;
                out.push((s.to_string(), cfg));
            }
        }
        AblationAxis::InitC => {
            for c in INIT_C_GRID {
                let mut cfg = base.clone();
                cfg.aga.c0 = c;
                out.push((c.to_string(), cfg));
            }
        }
        AblationAxis::AgaOnoff => {
            for on in [true, false] {
                let mut cfg = base.clone();
                cfg.aga.enabled = on;
                out.push((if on { "on" } else { "off" }.to_string(), cfg));
            }
        }
        AblationAxis::Nfe => out.push(("base".to_string(), base.clone())),
    }
    for (_, cfg) in &out {
        cfg.validate()?;
    }
    Ok(out)
}

/// Runs the grid with [`ABLATION_SEEDS`] seeds per point. `nfe` lists the
/// sampler steps: all of them on the `nfe` axis (default [`NFE_GRID`]),
/// otherwise only the first (default 1). `progress` sees each finished
/// (label, seed index, value).
pub fn run_ablation(
    base: &TrainConfig,
    axis: AblationAxis,
    nfe: Option<&[usize]>,
    eval_seed: u64,
    mut progress: impl FnMut(&str, u64, f64),
) -> Result<AblationTable> {
    base.validate()?;
    let data = task_dataset(base)?;
    let steps: Vec<usize> = match (axis, nfe) {
        (AblationAxis::Nfe, Some(list)) => list.to_vec(),
        (AblationAxis::Nfe, None) => NFE_GRID.to_vec(),
        (_, Some(list)) => list.iter().take(1).copied().collect(),
        (_, None) => vec![1],
    };
    if steps.is_empty() {
        return Err(Error::Config("empty NFE list".into()));
    }
    let points = grid(base, axis)?;
    let mut values: Vec<(String, Vec<f64>)> = match axis {
        AblationAxis::Nfe => steps.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        _ => points
            .iter()
            .map(|(l, _)| (l.clone(), Vec::new()))
            .collect(),
    };
    let mut metric = EvalMetric::EnergyDistance;
    for (p, (_, cfg)) in points.iter().enumerate() {
        for s in 0..ABLATION_SEEDS {
            let cfg = with_seed(cfg, s);
            let outcome = train(&cfg, &data)?;
            let report = evaluate(&outcome.model, &cfg, &steps, eval_seed)?;
            metric = report.metric;
            for (j, row) in report.rows.iter().enumerate() {
                let slot = if axis == AblationAxis::Nfe { j } else { p };
                values[slot].1.push(row.value);
                progress(&values[slot].0, s, row.value);
            }
        }
    }
    Ok(AblationTable {
        axis,
        task: base.task.name.clone(),
        metric,
        nfe: steps[0],
        cells: values
            .into_iter()
            .map(|(l, v)| AblationCell::new(l, v))
            .collect(),
    })
}

//! File-level commands behind the `msflow` binary.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::ablate::{run_ablation, AblationAxis, AblationTable};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::eval::{codebook_for, evaluate, generate, task_dataset, EvalReport};
use super::svg::scatter_svg;
use super::train::{MetricsWriter, Trainer};
use crate::error::{Error, Result};
use crate::tasks::{load_dataset, save_dataset, Dataset, DatasetMeta};

pub const DATA_FILE: &str = "data.msfm";
pub const CHECKPOINT_FILE: &str = "checkpoint.msck";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the task's training data to `out/data.msfm`.
pub fn cmd_gen_data(config: &TrainConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    ensure_dir(out)?;
    let path = out.join(DATA_FILE);
    save_dataset(&path, &task_dataset(config)?)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub config: PathBuf,
}

/// Trains on `data` (or on freshly generated task data) and writes the
/// resolved config, the metrics log and the checkpoint into `out`. The
/// checkpoint is rewritten after every epoch, so a run that aborts on a
/// non-finite value leaves the last good one in place.
pub fn cmd_train(config: &TrainConfig, data: Option<&Path>, out: &Path) -> Result<TrainArtifacts> {
    config.validate()?;
    let dataset = match data {
        Some(p) => {
            let ds = load_dataset(p)?;
            if ds.meta.name != config.task.name {
                return Err(Error::Config(format!(
                    "dataset {} holds {:?}, config trains {:?}",
                    p.display(),
                    ds.meta.name,
                    config.task.name
                )));
            }
            ds
        }
        None => task_dataset(config)?,
    };
    ensure_dir(out)?;
    let artifacts = TrainArtifacts {
        checkpoint: out.join(CHECKPOINT_FILE),
        metrics: out.join(METRICS_FILE),
        config: out.join(CONFIG_FILE),
    };
    write_text(&artifacts.config, &config.to_json_pretty())?;

    let mut trainer = Trainer::new(config, &dataset)?;
    let save = |t: &Trainer| {
        Checkpoint::new(config, t.model().clone(), t.epoch(), t.aga().clone())
            .save(&artifacts.checkpoint)
    };
    save(&trainer)?;
    let file = File::create(&artifacts.metrics).map_err(|e| Error::io(&artifacts.metrics, e))?;
    let mut log = MetricsWriter::new(BufWriter::new(file))?;
    while !trainer.is_done() {
        let result = trainer.run_epoch(&dataset, |row| log.write(row));
        log.flush()?;
        result?;
        save(&trainer)?;
    }
    Ok(artifacts)
}

/// Draws `count` samples with `steps` sampler steps and writes them in the
/// dataset format to `out/samples_nfe{steps}.msfm` (plus an SVG scatter when
/// asked). Conditional checkpoints take their conditions, cycled, from
/// `cond_data`.
pub fn cmd_sample(
    checkpoint: &Path,
    steps: usize,
    count: usize,
    seed: u64,
    cond_data: Option<&Path>,
    out: &Path,
    svg: bool,
) -> Result<PathBuf> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let model = &ck.model;
    let cond = if model.config().cond_dim > 0 {
        let path = cond_data.ok_or_else(|| {
            Error::Config("conditional checkpoint: pass a dataset to take conditions from".into())
        })?;
        let ds = load_dataset(path)?;
        let src = ds
            .conditions
            .ok_or_else(|| Error::Config(format!("{} has no conditions", path.display())))?;
        if src.cols() != model.config().cond_dim {
            return Err(Error::Config(format!(
                "conditions have {} columns, checkpoint expects {}",
                src.cols(),
                model.config().cond_dim
            )));
        }
        let idx: Vec<usize> = (0..count).map(|i| i % src.rows()).collect();
        Some(src.gather_rows(&idx))
    } else {
        None
    };
    let codebook = codebook_for(&ck.header.config, model.config().x_dim);
    let samples = generate(model, codebook.as_ref(), cond.as_ref(), count, steps, seed)?;
    ensure_dir(out)?;
    let path = out.join(format!("samples_nfe{steps}.msfm"));
    let ds = Dataset::new(
        samples,
        cond,
        DatasetMeta {
            name: format!("{}-samples", ck.header.config.task.name),
            seed,
            params: serde_json::json!({
                "nfe": steps,
                "count": count,
                "codebook": codebook.is_some(),
                "config_digest": ck.header.config_digest,
            }),
        },
    )?;
    save_dataset(&path, &ds)?;
    if svg {
        let title = format!("{} NFE={steps}", ck.header.config.task.name);
        write_text(
            &path.with_extension("svg"),
            &scatter_svg(&ds.samples, &title),
        )?;
    }
    Ok(path)
}

/// Evaluates a checkpoint at every NFE in `steps`; writes `eval.json` and
/// `eval.csv` into `out`. `task`, when given, must match the checkpoint.
pub fn cmd_eval(
    checkpoint: &Path,
    task: Option<&str>,
    steps: &[usize],
    seed: u64,
    out: &Path,
) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(t) = task {
        if t != ck.header.config.task.name {
            return Err(Error::Config(format!(
                "checkpoint was trained on {:?}, not {t:?}",
                ck.header.config.task.name
            )));
        }
    }
    let report = evaluate(&ck.model, &ck.header.config, steps, seed)?;
    ensure_dir(out)?;
    write_text(
        &out.join("eval.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_text(&out.join("eval.csv"), &report.to_csv())?;
    Ok(report)
}

/// Runs an ablation grid; writes `ablate_{axis}.csv` (table), `.json`, and
/// `ablate_{axis}_runs.csv` (per seed) into `out`.
pub fn cmd_ablate(
    config: &TrainConfig,
    axis: AblationAxis,
    steps: Option<&[usize]>,
    seed: u64,
    out: &Path,
    progress: impl FnMut(&str, u64, f64),
) -> Result<AblationTable> {
    let table = run_ablation(config, axis, steps, seed, progress)?;
    ensure_dir(out)?;
    let stem = format!("ablate_{axis}");
    write_text(&out.join(format!("{stem}.csv")), &table.to_csv())?;
    write_text(&out.join(format!("{stem}_runs.csv")), &table.runs_csv())?;
    write_text(
        &out.join(format!("{stem}.json")),
        &serde_json::to_string_pretty(&table)?,
    )?;
    Ok(table)
}

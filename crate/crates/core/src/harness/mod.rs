//! Configuration, training, checkpoints, evaluation and ablations.

mod ablate;
mod checkpoint;
mod commands;
mod config;
mod eval;
mod svg;
mod train;

pub use ablate::{
    grid, run_ablation, AblationAxis, AblationCell, AblationTable, ABLATION_SEEDS, INIT_C_GRID,
    NFE_GRID, SCHEDULE_GRID,
};
pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use commands::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_sample, cmd_train, TrainArtifacts, CHECKPOINT_FILE,
    CONFIG_FILE, DATA_FILE, METRICS_FILE,
};
pub use config::{
    CodebookConfig, NetSpec, Seeds, TaskConfig, TrainConfig, CONS_FRACTION_RANGE, REACH_TASK,
};
pub use eval::{
    codebook_for, evaluate, generate, task_dataset, EvalMetric, EvalReport, EvalRow, EVAL_EPISODES,
    EVAL_SAMPLES, HELDOUT_SEED_OFFSET,
};
pub use svg::scatter_svg;
pub use train::{train, MetricsRow, MetricsWriter, TrainOutcome, Trainer, METRICS_HEADER};

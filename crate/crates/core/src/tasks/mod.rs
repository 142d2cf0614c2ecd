//! Toy generative datasets, the planar reach task, and dataset files.

mod datasets;
mod io;
mod reach;

pub use datasets::{make_dataset, Dataset, DatasetMeta, ToyDistribution, MIXTURE_MODES};
pub(crate) use io::Reader;
pub use io::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use reach::{
    clip_norm, collect_demos, episode_rng, rollout_policy, run_episode, ChunkPolicy, Demos, Detour,
    EpisodeOutcome, EpisodeRecord, ExpertAsPolicy, ExpertPolicy, FlowPolicy, Obstacle, ReachEnv,
    Scene, Vec2, ZeroPolicy, ACTION_DIM, OBS_DIM,
};

//! Importance-weighted autoencoder with a diagonal-Gaussian proposal.

mod checkpoint;
mod model;
mod presets;
mod train;

pub use checkpoint::{sidecar_path, CheckpointMeta};
pub use model::{
    log_mean_exp, log_prior, reparam_sample, IwaeModel, LikelihoodKind, ModelSpec, BERNOULLI_CLAMP,
    INITIAL_LOG_VARIANCE,
};
pub use presets::Preset;
pub use train::{evaluate_bound, train, train_with, TrainConfig, TrainReport};

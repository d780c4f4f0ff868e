use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{IwaeModel, LikelihoodKind};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::numerics::serialize::{load_networks, save_networks};
use crate::numerics::Real;

const NETWORKS: [&str; 4] = ["encoder_trunk", "encoder_mean", "encoder_std", "decoder"];

/// JSON sidecar stored next to a checkpoint's parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub likelihood: LikelihoodKind,
    pub latent_dim: usize,
    pub data_dim: usize,
    pub log_variance: f64,
    pub train: Option<TrainConfig>,
    pub final_bound: Option<f64>,
}

/// Sidecar path for a parameter file: same stem, `.json` extension.
pub fn sidecar_path(params: &Path) -> PathBuf {
    params.with_extension("json")
}

impl<T: Real> IwaeModel<T> {
    pub fn meta(&self, train: Option<&TrainConfig>, final_bound: Option<f64>) -> CheckpointMeta {
        CheckpointMeta {
            likelihood: self.likelihood,
            latent_dim: self.latent_dim(),
            data_dim: self.data_dim(),
            log_variance: self.log_variance.as_f64(),
            train: train.cloned(),
            final_bound,
        }
    }

    /// Writes the parameter file and its sidecar; returns both paths.
    pub fn save(&self, path: impl AsRef<Path>, meta: &CheckpointMeta) -> Result<[PathBuf; 2]> {
        let path = path.as_ref();
        save_networks(
            path,
            &[
                (NETWORKS[0], &self.encoder_trunk),
                (NETWORKS[1], &self.encoder_mean),
                (NETWORKS[2], &self.encoder_std),
                (NETWORKS[3], &self.decoder),
            ],
        )?;
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(meta)?)?;
        Ok([path.to_path_buf(), side])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta)> {
        let path = path.as_ref();
        let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut nets = load_networks::<T>(path)?;
        if nets.len() != NETWORKS.len() || nets.iter().zip(NETWORKS).any(|((n, _), want)| n != want) {
            return Err(Error::Format(format!(
                "checkpoint must hold networks {NETWORKS:?}, found {:?}",
                nets.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>()
            )));
        }
        let decoder = nets.pop().expect("checked").1;
        let std = nets.pop().expect("checked").1;
        let mean = nets.pop().expect("checked").1;
        let trunk = nets.pop().expect("checked").1;
        let model = Self::from_parts(trunk, mean, std, decoder, meta.likelihood, T::lit(meta.log_variance))?;
        if model.latent_dim() != meta.latent_dim || model.data_dim() != meta.data_dim {
            return Err(Error::Format("checkpoint sidecar dimensions disagree with parameters".into()));
        }
        Ok((model, meta))
    }
}

use serde::{Deserialize, Serialize};

use super::model::{LikelihoodKind, ModelSpec};
use super::train::TrainConfig;
use crate::error::{Error, Result};

/// Per-dataset defaults. Learning rate, `K` and batch size follow the
/// published setups; hidden widths are reduced so that training fits a
/// single desktop core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pendulum,
    Robot,
    Mnist,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "robot" => Ok(Self::Robot),
            "mnist" => Ok(Self::Mnist),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::Robot => "robot",
            Self::Mnist => "mnist",
        }
    }

    pub fn hidden_width(self) -> usize {
        match self {
            Self::Pendulum => 64,
            Self::Robot => 64,
            Self::Mnist => 128,
        }
    }

    pub fn model_spec(self, data_dim: usize) -> ModelSpec {
        let w = self.hidden_width();
        match self {
            Self::Pendulum | Self::Robot => ModelSpec {
                data_dim,
                latent_dim: 2,
                encoder_hidden: vec![w, w],
                decoder_hidden: vec![w, w],
                residual_blocks: 0,
                likelihood: LikelihoodKind::GaussianGlobalVar,
            },
            Self::Mnist => ModelSpec {
                data_dim,
                latent_dim: 2,
                encoder_hidden: vec![w, w],
                decoder_hidden: vec![128],
                residual_blocks: 7,
                likelihood: LikelihoodKind::Bernoulli,
            },
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        let (k, learning_rate, batch_size, epochs) = match self {
            Self::Pendulum => (50, 1e-4, 20, 200),
            Self::Robot => (15, 1e-3, 150, 500),
            Self::Mnist => (50, 1e-4, 20, 50),
        };
        TrainConfig {
            k,
            learning_rate,
            batch_size,
            epochs,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_hyperparameters() {
        let p = Preset::Pendulum.train_config(0);
        assert_eq!((p.k, p.learning_rate, p.batch_size), (50, 1e-4, 20));
        let r = Preset::Robot.train_config(0);
        assert_eq!((r.k, r.learning_rate, r.batch_size), (15, 1e-3, 150));
        assert_eq!(Preset::Mnist.model_spec(784).residual_blocks, 7);
        assert_eq!("robot".parse::<Preset>().unwrap(), Preset::Robot);
        assert!("human".parse::<Preset>().is_err());
    }
}

use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IoContext;
use crate::fid::{ExtractorConfig, FidWeights};
use crate::losses::DEFAULT_LAMBDA_CYC;
use crate::models::{DiscriminatorConfig, GeneratorConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Self::F32 => DType::F32,
            Self::F64 => DType::F64,
        }
    }
}

/// Curated split directories, each holding a `manifest.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub cartoon_train: PathBuf,
    pub real_train: PathBuf,
    pub cartoon_val: Option<PathBuf>,
    pub real_val: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidConfig {
    pub extractor: ExtractorConfig,
    pub weights: FidWeights,
    pub batch_size: usize,
}

impl Default for FidConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorConfig::default(),
            weights: FidWeights::default(),
            batch_size: 16,
        }
    }
}

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub epochs: u64,
    pub batch_size: usize,
    pub lambda_cyc: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Linear decay of the learning rate to zero over the second half.
    pub lr_decay: bool,
    pub replay_buffer: bool,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Epochs between FID evaluations; 0 disables them.
    pub fid_interval: u64,
    /// Steps between training-log lines; the last step of an epoch is always logged.
    pub log_every: u64,
    /// Truncates every epoch to this many steps.
    pub max_steps_per_epoch: Option<u64>,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub fid: FidConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            epochs: 200,
            batch_size: 1,
            lambda_cyc: DEFAULT_LAMBDA_CYC,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lr_decay: true,
            replay_buffer: false,
            buffer_capacity: 50,
            seed: 0,
            precision: Precision::F32,
            fid_interval: 5,
            log_every: 1,
            max_steps_per_epoch: None,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            fid: FidConfig::default(),
        }
    }
}

/// Fields that determine the optimization trajectory.
#[derive(Serialize)]
struct HashedFields<'a> {
    /// Only the learning-rate schedule depends on it.
    epochs: Option<u64>,
    batch_size: usize,
    lambda_cyc: f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    lr_decay: bool,
    replay_buffer: bool,
    buffer_capacity: usize,
    seed: u64,
    precision: Precision,
    max_steps_per_epoch: Option<u64>,
    generator: &'a GeneratorConfig,
    discriminator: &'a DiscriminatorConfig,
}

impl TrainConfig {
    /// Tiny networks and a short schedule for fixtures and smoke runs.
    pub fn toy() -> Self {
        Self {
            epochs: 2,
            batch_size: 4,
            lr_decay: false,
            fid_interval: 1,
            generator: GeneratorConfig::tiny(),
            discriminator: DiscriminatorConfig::tiny(),
            fid: FidConfig {
                extractor: ExtractorConfig::test_linear(8, 0),
                ..FidConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).at(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lambda_cyc >= 0.0 && self.lambda_cyc.is_finite()) {
            return fail(format!("lambda_cyc must be ≥ 0, got {}", self.lambda_cyc));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.replay_buffer && self.buffer_capacity == 0 {
            return fail("buffer_capacity must be at least 1 when the replay buffer is on".into());
        }
        if self.log_every == 0 {
            return fail("log_every must be at least 1".into());
        }
        if self.max_steps_per_epoch == Some(0) {
            return fail("max_steps_per_epoch must be at least 1".into());
        }
        if self.fid.batch_size == 0 {
            return fail("fid.batch_size must be at least 1".into());
        }
        self.fid.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()
    }

    /// Digest of the trajectory-determining fields; data paths, FID
    /// settings and logging cadence are excluded, and so is the epoch count
    /// unless the learning rate decays.
    pub fn config_hash(&self) -> String {
        let fields = HashedFields {
            epochs: self.lr_decay.then_some(self.epochs),
            batch_size: self.batch_size,
            lambda_cyc: self.lambda_cyc,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            lr_decay: self.lr_decay,
            replay_buffer: self.replay_buffer,
            buffer_capacity: self.buffer_capacity,
            seed: self.seed,
            precision: self.precision,
            max_steps_per_epoch: self.max_steps_per_epoch,
            generator: &self.generator,
            discriminator: &self.discriminator,
        };
        let json = serde_json::to_vec(&fields).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Learning-rate multiplier for a 0-based epoch.
    pub fn lr_factor(&self, epoch: u64) -> f64 {
        if !self.lr_decay || self.epochs < 2 {
            return 1.0;
        }
        let decay = self.epochs / 2;
        let keep = self.epochs - decay;
        let into = (epoch + 1).saturating_sub(keep) as f64;
        (1.0 - into / (decay as f64 + 1.0)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2), (2e-4, 0.5, 0.999));
        assert_eq!((c.batch_size, c.buffer_capacity, c.fid_interval), (1, 50, 5));
        assert!(!c.replay_buffer);
        assert_eq!(c.lambda_cyc, 10.0);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = TrainConfig::toy();
        assert_eq!(TrainConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml_str("epochs = 3\n[generator]\nn_residual = 2\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.generator.n_residual, 2);
        assert_eq!(partial.generator.base_filters, 64);
        assert!(TrainConfig::from_toml_str("epoch = 3\n").is_err());
    }

    #[test]
    fn negative_lambda_is_config_error() {
        let err = TrainConfig::from_toml_str("lambda_cyc = -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn hash_ignores_paths_but_not_hyperparameters() {
        let a = TrainConfig::toy();
        let mut b = a.clone();
        b.data.cartoon_train = "elsewhere".into();
        b.fid_interval = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.epochs += 3;
        assert_eq!(a.config_hash(), b.config_hash());
        b.lr_decay = true;
        assert_ne!(a.config_hash(), b.config_hash());
        b.lr_decay = false;
        b.lr = 1e-4;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn linear_decay_over_second_half() {
        let c = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let f: Vec<f64> = (0..10).map(|e| c.lr_factor(e)).collect();
        assert!(f[..5].iter().all(|&x| x == 1.0), "{f:?}");
        assert!(f[5..].windows(2).all(|w| w[1] < w[0]));
        assert!(f[9] > 0.0 && f[9] < 0.2);
        let off = TrainConfig {
            lr_decay: false,
            ..c
        };
        assert_eq!(off.lr_factor(9), 1.0);
    }
}

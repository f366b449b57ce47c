use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::config::TrainConfig;
use super::optim::Adam;
use crate::error::IoContext;
use crate::imagedata::ImageBatch;
use crate::losses::{
    lsgan_discriminator_loss, lsgan_generator_loss, reconstruction_loss, scalar, total_objective, LossComponents,
    LossReport,
};
use crate::models::{Discriminator, Generator, NamedVars};
use crate::{Error, Result};

const STATE_FILE: &str = "state.json";
const CONFIG_FILE: &str = "config.json";

/// The four networks with their optimizer, spectral and buffer state.
#[derive(Debug, Clone)]
pub struct TrainState {
    config: TrainConfig,
    config_hash: String,
    /// Next epoch to run (0-based).
    pub epoch: u64,
    /// Completed `train_step` calls.
    pub step: u64,
    /// Cartoon → photo.
    pub g_r: Generator,
    /// Photo → cartoon.
    pub g_c: Generator,
    /// Scores photos.
    pub d_r: Discriminator,
    /// Scores cartoons.
    pub d_c: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    buffer_r: ReplayBuffer,
    buffer_c: ReplayBuffer,
    rng: ChaCha8Rng,
    /// Best weighted FID seen so far.
    pub best_fid: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    epoch: u64,
    step: u64,
    rng_seed: u64,
    config_hash: String,
    rng: ChaCha8Rng,
    opt_g_step: u64,
    opt_d_step: u64,
    best_fid: Option<f64>,
}

fn prefixed(prefix: &str, vars: NamedVars) -> NamedVars {
    vars.into_iter().map(|(n, v)| (format!("{prefix}.{n}"), v)).collect()
}

impl TrainState {
    /// Seeds every network and the buffer RNG from `config.seed`.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let dtype = config.precision.dtype();
        let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
        let g_r = Generator::new(&config.generator, seeds.next_u64(), dtype)?;
        let g_c = Generator::new(&config.generator, seeds.next_u64(), dtype)?;
        let d_r = Discriminator::new(&config.discriminator, seeds.next_u64(), dtype)?;
        let d_c = Discriminator::new(&config.discriminator, seeds.next_u64(), dtype)?;
        let rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        let (opt_g, opt_d) = Self::optimizers(config, &g_r, &g_c, &d_r, &d_c)?;
        let buffer = || ReplayBuffer::new(config.buffer_capacity, config.replay_buffer);
        Ok(Self {
            config: config.clone(),
            config_hash: config.config_hash(),
            epoch: 0,
            step: 0,
            g_r,
            g_c,
            d_r,
            d_c,
            opt_g,
            opt_d,
            buffer_r: buffer(),
            buffer_c: buffer(),
            rng,
            best_fid: None,
        })
    }

    fn optimizers(
        config: &TrainConfig,
        g_r: &Generator,
        g_c: &Generator,
        d_r: &Discriminator,
        d_c: &Discriminator,
    ) -> Result<(Adam, Adam)> {
        let mut g = prefixed("g_r", g_r.named_vars());
        g.extend(prefixed("g_c", g_c.named_vars()));
        let mut d = prefixed("d_r", d_r.named_vars());
        d.extend(prefixed("d_c", d_c.named_vars()));
        Ok((Adam::new(g, config.beta1, config.beta2)?, Adam::new(d, config.beta1, config.beta2)?))
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn dtype(&self) -> DType {
        self.config.precision.dtype()
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.lr_factor(self.epoch)
    }

    /// One joint generator update followed by one joint discriminator update.
    ///
    /// Discriminators are evaluated in eval mode during the generator update,
    /// so each spectral state advances exactly once per call, in the
    /// discriminator pass.
    pub fn train_step(&mut self, cartoon: &ImageBatch, real: &ImageBatch) -> Result<LossReport> {
        if cartoon.len() != real.len() {
            return Err(Error::Shape(format!(
                "cartoon and real batches differ in size: {} vs {}",
                cartoon.len(),
                real.len()
            )));
        }
        let dtype = self.dtype();
        let c = cartoon.tensor().to_dtype(dtype)?;
        let r = real.tensor().to_dtype(dtype)?;
        let lr = self.current_lr();

        let fake_r = self.g_r.forward_tensor(&c)?;
        let fake_c = self.g_c.forward_tensor(&r)?;
        let rec_c = self.g_c.forward_tensor(&fake_r)?;
        let rec_r = self.g_r.forward_tensor(&fake_c)?;
        let g_r_adv = lsgan_generator_loss(&self.d_r.forward_eval(&fake_r)?)?;
        let g_c_adv = lsgan_generator_loss(&self.d_c.forward_eval(&fake_c)?)?;
        let forward_cyc = reconstruction_loss(&c, &rec_c)?;
        let backward_cyc = reconstruction_loss(&r, &rec_r)?;
        let total_g = ((&g_r_adv + &g_c_adv)? + ((&forward_cyc + &backward_cyc)? * self.config.lambda_cyc)?)?;

        let mut parts = LossComponents {
            g_r_adv: scalar(&g_r_adv)?,
            g_c_adv: scalar(&g_c_adv)?,
            forward_cyc: scalar(&forward_cyc)?,
            backward_cyc: scalar(&backward_cyc)?,
            ..LossComponents::default()
        };
        total_objective(parts, self.config.lambda_cyc)?.check_finite()?;
        self.opt_g.step(&total_g.backward()?, lr)?;

        let m = c.dim(0)?;
        let pool_r = self.buffer_r.query(&fake_r.detach(), &mut self.rng)?;
        let pool_c = self.buffer_c.query(&fake_c.detach(), &mut self.rng)?;
        let d_r = Self::discriminator_loss(&mut self.d_r, &r, &pool_r, m)?;
        let d_c = Self::discriminator_loss(&mut self.d_c, &c, &pool_c, m)?;
        parts.d_r = scalar(&d_r)?;
        parts.d_c = scalar(&d_c)?;
        let report = total_objective(parts, self.config.lambda_cyc)?;
        report.check_finite()?;
        self.opt_d.step(&(d_r + d_c)?.backward()?, lr)?;
        self.step += 1;
        Ok(report)
    }

    fn discriminator_loss(d: &mut Discriminator, real: &Tensor, fake: &Tensor, m: usize) -> Result<Tensor> {
        let scores = d.forward_train(&Tensor::cat(&[real, fake], 0)?)?;
        let n = scores.dim(0)?;
        lsgan_discriminator_loss(&scores.narrow(0, 0, m)?, &scores.narrow(0, m, n - m)?)
    }

    /// Writes the checkpoint to a temporary sibling, then renames it over `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent).at(parent)?;
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Config(format!("checkpoint path {} has no name", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = parent.join(format!(".{name}.tmp"));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).at(&tmp)?;
        }
        self.write_into(&tmp)?;
        let old = parent.join(format!(".{name}.old"));
        if dir.exists() {
            if old.exists() {
                std::fs::remove_dir_all(&old).at(&old)?;
            }
            std::fs::rename(dir, &old).at(dir)?;
        }
        std::fs::rename(&tmp, dir).at(dir)?;
        if old.exists() {
            std::fs::remove_dir_all(&old).at(&old)?;
        }
        Ok(())
    }

    fn write_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        self.g_r.save(&dir.join("g_r"))?;
        self.g_c.save(&dir.join("g_c"))?;
        self.d_r.save(&dir.join("d_r"))?;
        self.d_c.save(&dir.join("d_c"))?;
        self.opt_g.save(&dir.join("opt_g"))?;
        self.opt_d.save(&dir.join("opt_d"))?;
        self.buffer_r.save(&dir.join("buffer_r"))?;
        self.buffer_c.save(&dir.join("buffer_c"))?;
        let state = StateFile {
            epoch: self.epoch,
            step: self.step,
            rng_seed: self.config.seed,
            config_hash: self.config_hash.clone(),
            rng: self.rng.clone(),
            opt_g_step: self.opt_g.step_count(),
            opt_d_step: self.opt_d.step_count(),
            best_fid: self.best_fid,
        };
        let path = dir.join(STATE_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&state)? + "\n").at(&path)?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self.config)? + "\n").at(&path)
    }

    /// Reads the configuration a checkpoint was written with.
    pub fn saved_config(dir: &Path) -> Result<TrainConfig> {
        let path = dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Checkpoint {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path,
            reason: e.to_string(),
        })
    }

    /// Restores a checkpoint; fails unless it was written under a config
    /// with the same hash as `config`.
    pub fn load(dir: &Path, config: &TrainConfig) -> Result<Self> {
        let path = dir.join(STATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Checkpoint {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let file: StateFile = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let hash = config.config_hash();
        if file.config_hash != hash {
            return Err(Error::Checkpoint {
                path: dir.to_path_buf(),
                reason: format!(
                    "config hash mismatch: checkpoint {}, active config {hash}",
                    file.config_hash
                ),
            });
        }
        let dtype = config.precision.dtype();
        let g_r = Generator::load(&config.generator, &dir.join("g_r"), dtype)?;
        let g_c = Generator::load(&config.generator, &dir.join("g_c"), dtype)?;
        let d_r = Discriminator::load(&config.discriminator, &dir.join("d_r"), dtype)?;
        let d_c = Discriminator::load(&config.discriminator, &dir.join("d_c"), dtype)?;
        let (mut opt_g, mut opt_d) = Self::optimizers(config, &g_r, &g_c, &d_r, &d_c)?;
        opt_g.load(&dir.join("opt_g"), file.opt_g_step)?;
        opt_d.load(&dir.join("opt_d"), file.opt_d_step)?;
        let mut buffer_r = ReplayBuffer::new(config.buffer_capacity, config.replay_buffer);
        let mut buffer_c = buffer_r.clone();
        buffer_r.load(&dir.join("buffer_r"))?;
        buffer_c.load(&dir.join("buffer_c"))?;
        Ok(Self {
            config: config.clone(),
            config_hash: hash,
            epoch: file.epoch,
            step: file.step,
            g_r,
            g_c,
            d_r,
            d_c,
            opt_g,
            opt_d,
            buffer_r,
            buffer_c,
            rng: file.rng,
            best_fid: file.best_fid,
        })
    }
}

/// Resolves `latest` / `best` to a checkpoint directory under `out`.
pub fn checkpoint_dir(out: &Path, which: &str) -> PathBuf {
    match which {
        "latest" | "best" => out.join("checkpoints").join(which),
        other => PathBuf::from(other),
    }
}

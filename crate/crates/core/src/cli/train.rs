use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::{guard_output, record_settings, set};
use crate::fid::ExtractorId;
use crate::trainer::{checkpoint_dir, fit, translate, Precision, TrainConfig, TRAIN_LOG_FILE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size networks and schedule.
    Default,
    /// Tiny networks, two epochs, `test_linear` FID.
    Toy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output root; receives train.toml, the training log and checkpoints/.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base configuration used when no `--config` file is given.
    #[arg(long, value_enum, default_value = "default")]
    pub preset: Preset,
    #[arg(long)]
    pub cartoon_train: Option<PathBuf>,
    #[arg(long)]
    pub real_train: Option<PathBuf>,
    #[arg(long)]
    pub cartoon_val: Option<PathBuf>,
    #[arg(long)]
    pub real_val: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Weight of the reconstruction losses.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_cyc: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs between FID evaluations; 0 disables them.
    #[arg(long)]
    pub fid_interval: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps_per_epoch: Option<u64>,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorId>,
    #[arg(long)]
    pub weights_url: Option<String>,
    #[arg(long)]
    pub weights_sha256: Option<String>,
    /// Turn the generated-image replay buffer on or off.
    #[arg(long)]
    pub replay_buffer: Option<bool>,
    /// Turn spectral normalization of the discriminators on or off.
    #[arg(long)]
    pub spectral_norm: Option<bool>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Continue from `latest`, `best` or a checkpoint directory.
    #[arg(long)]
    pub resume: Option<String>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => match self.preset {
                Preset::Default => TrainConfig::default(),
                Preset::Toy => TrainConfig::toy(),
            },
        };
        set(&mut c.data.cartoon_train, self.cartoon_train.clone());
        set(&mut c.data.real_train, self.real_train.clone());
        set(&mut c.data.cartoon_val, self.cartoon_val.clone().map(Some));
        set(&mut c.data.real_val, self.real_val.clone().map(Some));
        set(&mut c.epochs, self.epochs);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.lambda_cyc, self.lambda_cyc);
        set(&mut c.lr, self.lr);
        set(&mut c.fid_interval, self.fid_interval);
        set(&mut c.seed, self.seed);
        set(&mut c.max_steps_per_epoch, self.max_steps_per_epoch.map(Some));
        set(&mut c.fid.extractor.kind, self.extractor);
        set(&mut c.fid.extractor.weights_url, self.weights_url.clone());
        set(&mut c.fid.extractor.weights_sha256, self.weights_sha256.clone().map(Some));
        set(&mut c.replay_buffer, self.replay_buffer);
        set(&mut c.discriminator.spectral_norm, self.spectral_norm);
        set(
            &mut c.precision,
            self.precision.map(|p| match p {
                PrecisionArg::F32 => Precision::F32,
                PrecisionArg::F64 => Precision::F64,
            }),
        );
        c.validate()?;
        if c.data.cartoon_train.as_os_str().is_empty() || c.data.real_train.as_os_str().is_empty() {
            return Err(Error::Config(
                "training needs data.cartoon_train and data.real_train (--cartoon-train / --real-train)".into(),
            ));
        }
        Ok(c)
    }
}

pub(super) fn run_train(args: TrainArgs) -> Result<()> {
    let config = args.resolve()?;
    let resume = args.resume.as_deref().map(|r| checkpoint_dir(&args.out, r));
    if resume.is_none() {
        guard_output(&args.out.join(TRAIN_LOG_FILE), args.force)?;
        guard_output(&args.out.join("checkpoints"), args.force)?;
    }
    record_settings(&config, Some(&args.out.join("train.toml")))?;
    let outcome = fit(&config, &args.out, resume.as_deref())?;
    for (epoch, score) in &outcome.fid_log {
        println!(
            "epoch {epoch}: weighted FID {:.4} (vs target {:.4}, vs input {:.4})",
            score.score, score.vs_target, score.vs_input
        );
    }
    println!(
        "trained to epoch {} ({} steps); log at {}",
        outcome.state.epoch,
        outcome.state.step,
        outcome.log_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslateSettings {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of cartoon images.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for the translated images and translate.toml.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub(super) fn run_translate(args: TranslateArgs) -> Result<()> {
    let mut s: TranslateSettings = super::load_settings(args.config.as_ref())?;
    set(&mut s.checkpoint, args.checkpoint.clone());
    set(&mut s.input, args.input.clone());
    if s.checkpoint.as_os_str().is_empty() || s.input.as_os_str().is_empty() {
        return Err(Error::Config("translate needs --checkpoint and --input".into()));
    }
    guard_output(&args.out, args.force)?;
    let written = translate(&s.checkpoint, &s.input, &args.out)?;
    record_settings(&s, Some(&args.out.join("translate.toml")))?;
    println!("translated {} images into {}", written.len(), args.out.display());
    Ok(())
}

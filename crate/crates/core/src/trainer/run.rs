use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::state::TrainState;
use crate::error::IoContext;
use crate::fid::{compute_stats, weighted_fid, FeatureExtractor, FidStats, WeightedFid};
use crate::imagedata::{list_images, resize_and_crop, BatchLoader, DomainTag, ImageBatch};
use crate::losses::LossReport;
use crate::models::Generator;
use crate::{Error, Result};

pub const TRAIN_LOG_FILE: &str = "train_log.ndjson";

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub epoch: u64,
    #[serde(flatten)]
    pub losses: LossReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<WeightedFid>,
}

/// Reads a newline-delimited JSON training log.
pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug)]
pub struct FitOutcome {
    pub state: TrainState,
    /// `(epoch, score)` for every FID evaluation of this run, 1-based epochs.
    pub fid_log: Vec<(u64, WeightedFid)>,
    pub log_path: PathBuf,
}

struct Evaluator {
    extractor: Box<dyn FeatureExtractor>,
    cartoon_val: BatchLoader,
    real_stats: FidStats,
    cartoon_stats: FidStats,
}

impl Evaluator {
    fn new(config: &TrainConfig) -> Result<Self> {
        let (Some(cv), Some(rv)) = (&config.data.cartoon_val, &config.data.real_val) else {
            return Err(Error::Config(
                "FID evaluation needs data.cartoon_val and data.real_val (or set fid_interval = 0)".into(),
            ));
        };
        let extractor = config.fid.extractor.build()?;
        let bs = config.fid.batch_size;
        let cartoon_val = BatchLoader::open(cv, bs, None)?;
        let real_val = BatchLoader::open(rv, bs, None)?;
        let real_stats = compute_stats(real_val.epoch(0), extractor.as_ref())?;
        let cartoon_stats = compute_stats(cartoon_val.epoch(0), extractor.as_ref())?;
        Ok(Self {
            extractor,
            cartoon_val,
            real_stats,
            cartoon_stats,
        })
    }

    fn score(&self, g_r: &Generator, config: &TrainConfig) -> Result<WeightedFid> {
        let translated = self.cartoon_val.epoch(0).map(|b| g_r.forward(&b?));
        let gen = compute_stats(translated, self.extractor.as_ref())?;
        weighted_fid(&gen, &self.real_stats, &self.cartoon_stats, config.fid.weights)
    }
}

/// Runs the configured epochs, writing `train_log.ndjson` and the `latest`
/// and `best` checkpoints under `out`.
///
/// With `resume`, the state is restored from that checkpoint and training
/// continues from its next epoch.
pub fn fit(config: &TrainConfig, out: &Path, resume: Option<&Path>) -> Result<FitOutcome> {
    config.validate()?;
    let mut state = match resume {
        Some(dir) => TrainState::load(dir, config)?,
        None => TrainState::new(config)?,
    };
    std::fs::create_dir_all(out).at(out)?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .at(&log_path)?;
    let mut log = BufWriter::new(log_file);
    let mut fid_log = Vec::new();
    if state.epoch >= config.epochs {
        return Ok(FitOutcome {
            state,
            fid_log,
            log_path,
        });
    }

    let cartoon = BatchLoader::open(&config.data.cartoon_train, config.batch_size, Some(config.seed))?;
    let real = BatchLoader::open(&config.data.real_train, config.batch_size, Some(config.seed ^ 1))?;
    let evaluator = if config.fid_interval > 0 {
        Some(Evaluator::new(config)?)
    } else {
        None
    };
    let ckpt_root = out.join("checkpoints");

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let mut steps = cartoon.batches_per_epoch().min(real.batches_per_epoch()) as u64;
        if let Some(cap) = config.max_steps_per_epoch {
            steps = steps.min(cap);
        }
        let mut last = None;
        for (k, (c, r)) in cartoon.epoch(epoch).zip(real.epoch(epoch)).take(steps as usize).enumerate() {
            let (c, r) = (c?, r?);
            let m = c.len().min(r.len());
            let (c, r) = if c.len() != r.len() { (c.truncate(m)?, r.truncate(m)?) } else { (c, r) };
            let losses = state.train_step(&c, &r)?;
            let entry = LogEntry {
                step: state.step,
                epoch,
                losses,
                fid: None,
            };
            if k as u64 + 1 == steps {
                last = Some(entry);
            } else if state.step % config.log_every == 0 {
                writeln!(log, "{}", serde_json::to_string(&entry)?).at(&log_path)?;
            }
        }
        state.epoch += 1;
        let mut improved = false;
        if let (Some(ev), true) = (&evaluator, state.epoch % config.fid_interval.max(1) == 0) {
            let score = ev.score(&state.g_r, config)?;
            log::info!(
                "epoch {}: weighted FID {:.4} (target {:.4}, input {:.4})",
                state.epoch,
                score.score,
                score.vs_target,
                score.vs_input
            );
            if let Some(e) = last.as_mut() {
                e.fid = Some(score);
            }
            fid_log.push((state.epoch, score));
            improved = state.best_fid.is_none_or(|b| score.score < b);
            if improved {
                state.best_fid = Some(score.score);
            }
        }
        if let Some(e) = last {
            log::info!(
                "epoch {} step {}: total_g {:.4} total_d {:.4}",
                e.epoch + 1,
                e.step,
                e.losses.total_g,
                e.losses.total_d
            );
            writeln!(log, "{}", serde_json::to_string(&e)?).at(&log_path)?;
        }
        log.flush().at(&log_path)?;
        if improved {
            state.save(&ckpt_root.join("best"))?;
        }
        state.save(&ckpt_root.join("latest"))?;
    }
    Ok(FitOutcome {
        state,
        fid_log,
        log_path,
    })
}

/// Translates every image in `inputs` with the checkpoint's cartoon → photo
/// generator, writing same-named files into `out`.
///
/// Images whose size the generator cannot take are resized and
/// center-cropped to the training resolution first.
pub fn translate(checkpoint: &Path, inputs: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let config = TrainState::saved_config(checkpoint)?;
    let g_r = Generator::load(&config.generator, &checkpoint.join("g_r"), config.precision.dtype())?;
    let files = list_images(inputs)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus(format!("no images in {}", inputs.display())));
    }
    let fallback = BatchLoader::open(&config.data.cartoon_train, 1, None)
        .map(|l| l.image_size())
        .unwrap_or(crate::imagedata::DEFAULT_IMAGE_SIZE);
    std::fs::create_dir_all(out).at(out)?;
    let mut written = Vec::with_capacity(files.len());
    for path in files {
        let img = image::open(&path)
            .map_err(|e| Error::Decode {
                path: path.clone(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let img = if g_r.check_input(h as usize, w as usize).is_ok() {
            img
        } else {
            resize_and_crop(&img, fallback)
        };
        let batch = ImageBatch::from_images(&[img], DomainTag::Cartoon, &Device::Cpu)?;
        let result = g_r.forward(&batch)?.to_images()?.remove(0);
        let dest = out.join(path.file_name().expect("listed files have names"));
        result.save(&dest)?;
        written.push(dest);
    }
    Ok(written)
}

/// Writes `entries` as a fresh training log; used by tools and tests.
pub fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for e in entries {
        writeln!(w, "{}", serde_json::to_string(e)?).at(path)?;
    }
    w.flush().at(path)
}

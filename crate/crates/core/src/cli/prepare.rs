use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::{guard_output, load_settings, record_settings, set};
use crate::error::IoContext;
use crate::imagedata::{
    build_manifest, extract_frames, list_images, write_frame_log, Domain, ExtractConfig, SplitCounts,
    DEFAULT_DARK_THRESHOLD, DEFAULT_IMAGE_SIZE, DEFAULT_SAMPLE_RATE, DEFAULT_TRIM_FRACTION,
};
use crate::{Error, Result};

const VIDEO_EXTENSIONS: &[&str] = &["gif", "mp4", "mkv", "avi", "mov", "webm", "m4v"];
/// Validation share used when split sizes are not given.
const DEFAULT_VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareSettings {
    /// Directory of videos to sample frames from.
    pub videos: Option<PathBuf>,
    /// Directory of still images (used when no videos are given).
    pub images: Option<PathBuf>,
    pub domain: Domain,
    pub fps: f64,
    pub trim: f64,
    /// Minimum mean luminance; 0 keeps every frame.
    pub dark: f64,
    pub size: u32,
    pub seed: u64,
    pub train: Option<usize>,
    pub val: Option<usize>,
    /// File of source ids or file names to drop, one per line.
    pub exclude: Option<PathBuf>,
}

impl Default for PrepareSettings {
    fn default() -> Self {
        Self {
            videos: None,
            images: None,
            domain: Domain::Cartoon,
            fps: DEFAULT_SAMPLE_RATE,
            trim: DEFAULT_TRIM_FRACTION,
            dark: DEFAULT_DARK_THRESHOLD,
            size: DEFAULT_IMAGE_SIZE,
            seed: 0,
            train: None,
            val: None,
            exclude: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Output root; receives frames/, train/, val/ and prepare.toml.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub videos: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub domain: Option<Domain>,
    /// Frames sampled per second of video.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Fraction of each video dropped at both ends.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Minimum mean luminance in [0, 1].
    #[arg(long)]
    pub dark: Option<f64>,
    /// Side length of the square output images.
    #[arg(long)]
    pub size: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training images to keep.
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation images to keep.
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

impl PrepareArgs {
    pub fn resolve(&self) -> Result<PrepareSettings> {
        let mut s: PrepareSettings = load_settings(self.config.as_ref())?;
        set(&mut s.videos, self.videos.clone().map(Some));
        set(&mut s.images, self.images.clone().map(Some));
        set(&mut s.domain, self.domain);
        set(&mut s.fps, self.fps);
        set(&mut s.trim, self.trim);
        set(&mut s.dark, self.dark);
        set(&mut s.size, self.size);
        set(&mut s.seed, self.seed);
        set(&mut s.train, self.train.map(Some));
        set(&mut s.val, self.val.map(Some));
        set(&mut s.exclude, self.exclude.clone().map(Some));
        if s.videos.is_none() && s.images.is_none() {
            return Err(Error::Config("prepare needs --videos or --images".into()));
        }
        if s.size == 0 {
            return Err(Error::Config("--size must be positive".into()));
        }
        Ok(s)
    }
}

fn read_exclusions(path: Option<&PathBuf>) -> Result<Vec<String>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = std::fs::read_to_string(path).at(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn list_videos(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| VIDEO_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::EmptyCorpus(format!("no videos in {}", dir.display())));
    }
    Ok(out)
}

/// Splits `n` usable images 80/20 when the sizes are not given.
fn split_counts(s: &PrepareSettings, usable: usize) -> SplitCounts {
    match (s.train, s.val) {
        (Some(train), Some(val)) => SplitCounts { train, val },
        (Some(train), None) => SplitCounts {
            train,
            val: usable.saturating_sub(train),
        },
        (None, Some(val)) => SplitCounts {
            train: usable.saturating_sub(val),
            val,
        },
        (None, None) => {
            let val = (usable as f64 * DEFAULT_VAL_FRACTION).round() as usize;
            SplitCounts {
                train: usable - val,
                val,
            }
        }
    }
}

pub(super) fn run(args: PrepareArgs) -> Result<()> {
    let s = args.resolve()?;
    guard_output(&args.out.join("train"), args.force)?;
    guard_output(&args.out.join("val"), args.force)?;
    let exclude = read_exclusions(s.exclude.as_ref())?;

    let image_dir = if let Some(videos) = &s.videos {
        let frames = args.out.join("frames");
        guard_output(&frames, args.force)?;
        let videos = list_videos(videos)?;
        if frames.exists() {
            std::fs::remove_dir_all(&frames).at(&frames)?;
        }
        let config = ExtractConfig {
            sample_rate: s.fps,
            trim_fraction: s.trim,
            dark_threshold: (s.dark > 0.0).then_some(s.dark),
        };
        let mut records = Vec::new();
        for v in &videos {
            let recs = extract_frames(v, &config, &frames)?;
            let kept = recs.iter().filter(|r| r.accepted).count();
            log::info!("{}: kept {kept} of {} sampled frames", v.display(), recs.len());
            records.extend(recs);
        }
        write_frame_log(&frames, &records)?;
        frames
    } else {
        s.images.clone().expect("resolve checked a source")
    };

    for split in ["train", "val"] {
        let dir = args.out.join(split);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).at(&dir)?;
        }
    }
    let dropped: HashSet<&str> = exclude.iter().map(String::as_str).collect();
    let usable = list_images(&image_dir)?
        .iter()
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let stem = p.file_stem().and_then(|n| n.to_str()).unwrap_or_default();
            !dropped.contains(name) && !dropped.contains(stem)
        })
        .count();
    if usable == 0 {
        return Err(Error::EmptyCorpus(format!("no usable images in {}", image_dir.display())));
    }
    let counts = split_counts(&s, usable);
    let data = build_manifest(&image_dir, &args.out, s.domain, counts, s.seed, s.size, &exclude)?;
    record_settings(&s, Some(&args.out.join("prepare.toml")))?;
    println!(
        "wrote {} train images to {} and {} val images to {}",
        data.train.records.len(),
        data.train_dir.display(),
        data.val.records.len(),
        data.val_dir.display()
    );
    Ok(())
}

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pixels::{mean_luminance, resize_and_crop};
use crate::error::IoContext;
use crate::{Error, Result};

pub const DEFAULT_IMAGE_SIZE: u32 = 128;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Extraction log written next to extracted frames; picked up by
/// [`build_manifest`] to carry provenance into the split manifests.
pub const FRAME_LOG_FILE: &str = "frames.json";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Cartoon,
    Real,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Cartoon => "cartoon",
            Domain::Real => "real",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Dark,
    HeadTrim,
    TailTrim,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub source_id: String,
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub mean_luminance: f64,
    pub accepted: bool,
    pub reject_reason: RejectReason,
}

impl FrameRecord {
    /// Image file name derived from provenance: `<source_id>_<frame_index:06>.png`.
    pub fn file_name(&self) -> String {
        format!("{}_{:06}.png", sanitize(&self.source_id), self.frame_index)
    }
}

/// Keeps `[A-Za-z0-9._-]`, maps everything else to `_`.
pub(crate) fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub domain: Domain,
    pub records: Vec<FrameRecord>,
    pub image_size: u32,
    pub split: Split,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).at(&path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).at(&path)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &FrameRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Checks every accepted record against the image files in `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for rec in self.accepted() {
            let path = dir.join(rec.file_name());
            let (w, h) = image::image_dimensions(&path).map_err(|_| Error::MissingImage(path.clone()))?;
            if (w, h) != (self.image_size, self.image_size) {
                return Err(Error::Integrity(format!(
                    "{} is {w}x{h}, manifest says {s}x{s}",
                    path.display(),
                    s = self.image_size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
}

impl SplitCounts {
    /// Validation sizes used for the published corpora.
    pub const PUBLISHED_CARTOON: Self = Self { train: 5000, val: 2500 };
    pub const PUBLISHED_REAL: Self = Self { train: 5000, val: 2000 };
}

#[derive(Debug, Clone)]
pub struct CuratedDataset {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub train_dir: PathBuf,
    pub val_dir: PathBuf,
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_image && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Curates `image_dir` into seeded, disjoint train/val splits under
/// `out_root/{train,val}`, resizing every image to `image_size²`.
///
/// Images listed in `exclude` (by file name or source id) are dropped first.
#[allow(clippy::too_many_arguments)]
pub fn build_manifest(
    image_dir: &Path,
    out_root: &Path,
    domain: Domain,
    counts: SplitCounts,
    seed: u64,
    image_size: u32,
    exclude: &[String],
) -> Result<CuratedDataset> {
    let frame_log: BTreeMap<String, FrameRecord> = {
        let log = image_dir.join(FRAME_LOG_FILE);
        if log.is_file() {
            let text = std::fs::read_to_string(&log).at(&log)?;
            let recs: Vec<FrameRecord> = serde_json::from_str(&text)?;
            recs.into_iter()
                .filter(|r| r.accepted)
                .map(|r| (r.file_name(), r))
                .collect()
        } else {
            BTreeMap::new()
        }
    };
    let excluded: HashSet<&str> = exclude.iter().map(String::as_str).collect();

    let mut candidates = Vec::new();
    let mut names = HashSet::new();
    for path in list_images(image_dir)? {
        let file = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let record = match frame_log.get(&file) {
            Some(r) => r.clone(),
            None => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                FrameRecord {
                    source_id: stem.to_string(),
                    frame_index: 0,
                    timestamp_s: 0.0,
                    mean_luminance: f64::NAN,
                    accepted: true,
                    reject_reason: RejectReason::None,
                }
            }
        };
        if excluded.contains(file.as_str()) || excluded.contains(record.source_id.as_str()) {
            continue;
        }
        if !names.insert(record.file_name()) {
            return Err(Error::Integrity(format!(
                "two inputs map to the same output name {}",
                record.file_name()
            )));
        }
        candidates.push((path, record));
    }

    if candidates.len() < counts.train + counts.val {
        return Err(Error::CorpusSize {
            found: candidates.len(),
            train: counts.train,
            val: counts.val,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let mut val_part = candidates.split_off(counts.train);
    val_part.truncate(counts.val);
    let train_part = candidates;

    let train_dir = out_root.join(Split::Train.to_string());
    let val_dir = out_root.join(Split::Val.to_string());
    let train = write_split(train_part, &train_dir, domain, Split::Train, image_size)?;
    let val = write_split(val_part, &val_dir, domain, Split::Val, image_size)?;
    Ok(CuratedDataset {
        train,
        val,
        train_dir,
        val_dir,
    })
}

fn write_split(
    mut part: Vec<(PathBuf, FrameRecord)>,
    dir: &Path,
    domain: Domain,
    split: Split,
    image_size: u32,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).at(dir)?;
    part.sort_by_key(|(_, r)| r.file_name());
    let mut records = Vec::with_capacity(part.len());
    for (src, mut rec) in part {
        let img = image::open(&src)
            .map_err(|e| Error::Decode {
                path: src.clone(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let img = resize_and_crop(&img, image_size);
        if rec.mean_luminance.is_nan() {
            let f = image::DynamicImage::ImageRgb8(img.clone()).to_rgb32f();
            rec.mean_luminance = mean_luminance(&f);
        }
        let dst = dir.join(rec.file_name());
        img.save_with_format(&dst, image::ImageFormat::Png)?;
        records.push(rec);
    }
    let manifest = DatasetManifest {
        domain,
        records,
        image_size,
        split,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn corpus(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            let img = RgbImage::from_pixel(40, 30, image::Rgb([(i * 20) as u8, 100, 200]));
            img.save(dir.path().join(format!("photo{i:02}.png"))).unwrap();
        }
        dir
    }

    #[test]
    fn same_seed_same_manifest_bytes() {
        let src = corpus(10);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let counts = SplitCounts { train: 8, val: 2 };
        let ca = build_manifest(src.path(), a.path(), Domain::Real, counts, 7, 16, &[]).unwrap();
        build_manifest(src.path(), b.path(), Domain::Real, counts, 7, 16, &[]).unwrap();
        for split in ["train", "val"] {
            let x = std::fs::read(a.path().join(split).join(MANIFEST_FILE)).unwrap();
            let y = std::fs::read(b.path().join(split).join(MANIFEST_FILE)).unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(ca.train.records.len(), 8);
        assert_eq!(ca.val.records.len(), 2);
        ca.train.verify(&ca.train_dir).unwrap();
        ca.val.verify(&ca.val_dir).unwrap();
        let train: HashSet<_> = ca.train.records.iter().map(|r| r.file_name()).collect();
        assert!(ca.val.records.iter().all(|r| !train.contains(&r.file_name())));
    }

    #[test]
    fn oversized_split_is_a_corpus_error() {
        let src = corpus(10);
        let out = tempfile::tempdir().unwrap();
        let err = build_manifest(
            src.path(),
            out.path(),
            Domain::Real,
            SplitCounts { train: 8, val: 3 },
            7,
            16,
            &[],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("10 usable") && msg.contains("8 train + 3 val"), "{msg}");
        assert!(matches!(err, Error::CorpusSize { found: 10, train: 8, val: 3 }));
    }

    #[test]
    fn exclusion_list_drops_images() {
        let src = corpus(4);
        let out = tempfile::tempdir().unwrap();
        let c = build_manifest(
            src.path(),
            out.path(),
            Domain::Real,
            SplitCounts { train: 3, val: 0 },
            1,
            8,
            &["photo02.png".to_string()],
        )
        .unwrap();
        assert!(c.train.records.iter().all(|r| r.source_id != "photo02"));
    }

    #[test]
    fn verify_reports_missing_file() {
        let src = corpus(3);
        let out = tempfile::tempdir().unwrap();
        let c = build_manifest(src.path(), out.path(), Domain::Cartoon, SplitCounts { train: 3, val: 0 }, 0, 8, &[]).unwrap();
        let victim = c.train_dir.join(c.train.records[1].file_name());
        std::fs::remove_file(&victim).unwrap();
        match c.train.verify(&c.train_dir) {
            Err(Error::MissingImage(p)) => assert_eq!(p, victim),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn published_split_sizes() {
        assert_eq!(SplitCounts::PUBLISHED_CARTOON.val, 2500);
        assert_eq!(SplitCounts::PUBLISHED_REAL.val, 2000);
        assert_eq!(SplitCounts::PUBLISHED_REAL.train, 5000);
    }
}

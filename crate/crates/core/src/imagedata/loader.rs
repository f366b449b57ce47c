use std::path::{Path, PathBuf};

use candle_core::Device;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{DomainTag, ImageBatch};
use super::manifest::{DatasetManifest, Domain};
use crate::{Error, Result};

/// Serves shuffled batches from one curated split.
///
/// Order is a pure function of `(shuffle_seed, epoch)`; the last partial batch
/// of an epoch is kept.
#[derive(Debug, Clone)]
pub struct BatchLoader {
    files: Vec<PathBuf>,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    tag: DomainTag,
    image_size: u32,
    device: Device,
}

impl BatchLoader {
    /// Opens the split whose `manifest.json` lives in `dir`.
    pub fn open(dir: &Path, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        Self::new(&manifest, dir, batch_size, shuffle_seed)
    }

    pub fn new(manifest: &DatasetManifest, dir: &Path, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        manifest.verify(dir)?;
        let files = manifest.accepted().map(|r| dir.join(r.file_name())).collect::<Vec<_>>();
        if files.is_empty() {
            return Err(Error::EmptyCorpus(format!("{} lists no accepted images", dir.display())));
        }
        let tag = match manifest.domain {
            Domain::Cartoon => DomainTag::Cartoon,
            Domain::Real => DomainTag::Real,
        };
        Ok(Self {
            files,
            batch_size,
            shuffle_seed,
            tag,
            image_size: manifest.image_size,
            device: Device::Cpu,
        })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn image_size(&self) -> u32 {
        self.image_size
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.files.len().div_ceil(self.batch_size)
    }

    fn order(&self, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.files.len()).collect();
        if let Some(seed) = self.shuffle_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            idx.shuffle(&mut rng);
        }
        idx
    }

    /// Batches of one epoch, decoded lazily.
    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Result<ImageBatch>> + '_ {
        let order = self.order(epoch);
        let chunks: Vec<Vec<usize>> = order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        chunks.into_iter().map(move |chunk| self.load(&chunk))
    }

    fn load(&self, indices: &[usize]) -> Result<ImageBatch> {
        let mut images = Vec::with_capacity(indices.len());
        for &i in indices {
            let path = &self.files[i];
            if !path.is_file() {
                return Err(Error::MissingImage(path.clone()));
            }
            let img = image::open(path)
                .map_err(|e| Error::Decode {
                    path: path.clone(),
                    reason: e.to_string(),
                })?
                .to_rgb8();
            if img.dimensions() != (self.image_size, self.image_size) {
                return Err(Error::Integrity(format!(
                    "{} changed size since curation",
                    path.display()
                )));
            }
            images.push(img);
        }
        ImageBatch::from_images(&images, self.tag, &self.device)
    }
}

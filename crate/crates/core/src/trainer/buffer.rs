use std::path::Path;

use candle_core::Tensor;
use rand::Rng;

use crate::models::archive;
use crate::{Error, Result};

/// Probability that a full buffer returns a stored image instead of the new one.
pub const SWAP_PROBABILITY: f64 = 0.5;

/// History of generated images shown to a discriminator.
///
/// While filling, every image is stored and returned unchanged. Once full,
/// each incoming image is swapped for a random stored one with probability
/// [`SWAP_PROBABILITY`]. A disabled buffer returns its input untouched.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    enabled: bool,
    images: Vec<Tensor>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, enabled: bool) -> Self {
        Self {
            capacity,
            enabled,
            images: Vec::new(),
        }
    }

    pub fn disabled() -> Self {
        Self::new(0, false)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Mixes a detached `(m, C, H, W)` batch with the stored history.
    pub fn query<R: Rng + ?Sized>(&mut self, batch: &Tensor, rng: &mut R) -> Result<Tensor> {
        if !self.enabled {
            return Ok(batch.clone());
        }
        let batch = batch.detach();
        let mut out = Vec::with_capacity(batch.dim(0)?);
        for i in 0..batch.dim(0)? {
            let img = batch.get(i)?;
            if self.images.len() < self.capacity {
                self.images.push(img.clone());
                out.push(img);
            } else if rng.random_bool(SWAP_PROBABILITY) {
                let j = rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.images[j], img));
            } else {
                out.push(img);
            }
        }
        Ok(Tensor::stack(&out, 0)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let entries: Vec<(String, Tensor)> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("img{i}"), t.clone()))
            .collect();
        archive::write_archive(dir, "images", &entries)
    }

    pub fn load(&mut self, dir: &Path) -> Result<()> {
        let entries = archive::read_archive(dir, "images")?;
        if self.enabled && entries.len() > self.capacity {
            return Err(Error::Checkpoint {
                path: dir.to_path_buf(),
                reason: format!("replay buffer holds {} images, capacity is {}", entries.len(), self.capacity),
            });
        }
        self.images = entries.into_iter().map(|(_, t)| t).collect();
        Ok(())
    }
}

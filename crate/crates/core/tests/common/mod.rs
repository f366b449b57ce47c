//! Synthetic two-domain fixture shared by the integration and acceptance
//! tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cyclegan_sn::imagedata::{build_manifest, Domain, SplitCounts};
use cyclegan_sn::trainer::{DataConfig, TrainConfig};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_SIZE: u32 = 32;
pub const FIXTURE_PER_DOMAIN: usize = 64;
pub const FIXTURE_SPLIT: SplitCounts = SplitCounts { train: 48, val: 16 };

const PALETTE: [[u8; 3]; 6] = [
    [230, 40, 40],
    [40, 200, 60],
    [40, 80, 230],
    [250, 210, 30],
    [240, 120, 200],
    [30, 210, 220],
];

/// Flat saturated background with hard-edged rectangles.
pub fn cartoon_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let s = FIXTURE_SIZE;
    let bg = PALETTE[rng.random_range(0..PALETTE.len())];
    let mut img = RgbImage::from_pixel(s, s, Rgb(bg));
    for _ in 0..rng.random_range(1..4) {
        let c = PALETTE[rng.random_range(0..PALETTE.len())];
        let (x0, y0) = (rng.random_range(0..s - 8), rng.random_range(0..s - 8));
        let (w, h) = (rng.random_range(6..s / 2), rng.random_range(6..s / 2));
        for y in y0..(y0 + h).min(s) {
            for x in x0..(x0 + w).min(s) {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }
    img
}

/// Muted smooth gradient with per-pixel grain.
pub fn real_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let s = FIXTURE_SIZE as f64;
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(70.0..150.0));
    let (gx, gy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    RgbImage::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |x, y| {
        let shade = gx * (x as f64 - s / 2.0) + gy * (y as f64 - s / 2.0);
        Rgb(std::array::from_fn(|c| {
            let grain: f64 = rng.random_range(-18.0..18.0);
            (base[c] + shade + grain + 10.0 * c as f64).clamp(0.0, 255.0) as u8
        }))
    })
}

pub fn write_raw(dir: &Path, domain: Domain, n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let img = match domain {
            Domain::Cartoon => cartoon_image(&mut rng),
            Domain::Real => real_image(&mut rng),
        };
        img.save(dir.join(format!("{domain}{i:03}.png"))).unwrap();
    }
}

/// Curated `{cartoon,real}/{train,val}` splits under `root`.
pub struct Fixture {
    pub root: PathBuf,
    pub cartoon_train: PathBuf,
    pub cartoon_val: PathBuf,
    pub real_train: PathBuf,
    pub real_val: PathBuf,
}

impl Fixture {
    pub fn build(root: &Path) -> Self {
        for (domain, seed) in [(Domain::Cartoon, 11), (Domain::Real, 12)] {
            let raw = root.join("raw").join(domain.to_string());
            write_raw(&raw, domain, FIXTURE_PER_DOMAIN, seed);
            build_manifest(&raw, &root.join(domain.to_string()), domain, FIXTURE_SPLIT, 0, FIXTURE_SIZE, &[])
                .unwrap();
        }
        Self {
            root: root.to_path_buf(),
            cartoon_train: root.join("cartoon/train"),
            cartoon_val: root.join("cartoon/val"),
            real_train: root.join("real/train"),
            real_val: root.join("real/val"),
        }
    }

    pub fn data(&self) -> DataConfig {
        DataConfig {
            cartoon_train: self.cartoon_train.clone(),
            real_train: self.real_train.clone(),
            cartoon_val: Some(self.cartoon_val.clone()),
            real_val: Some(self.real_val.clone()),
        }
    }

    pub fn toy_config(&self) -> TrainConfig {
        TrainConfig {
            data: self.data(),
            ..TrainConfig::toy()
        }
    }
}

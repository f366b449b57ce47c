use std::path::PathBuf;

use candle_core::{DType, Tensor};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::inception::{InceptionV3, INCEPTION_DIM};
use super::stats::{FidStats, StatsAccumulator};
use super::weights::{fetch_weights, DEFAULT_INCEPTION_URL};
use crate::imagedata::ImageBatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExtractorId {
    InceptionV3Pool3,
    TestLinear,
}

impl std::fmt::Display for ExtractorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::InceptionV3Pool3 => "inception_v3_pool3",
            Self::TestLinear => "test_linear",
        })
    }
}

/// Maps images to fixed-length feature vectors. Must be deterministic.
pub trait FeatureExtractor {
    fn id(&self) -> ExtractorId;
    fn dim(&self) -> usize;
    fn features(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>>;
}

/// Fixed Gaussian projection of a grid-pooled image.
///
/// Each image is average-pooled to `grid × grid` cells per channel and the
/// resulting `3·grid²` vector is multiplied by a seeded `dim × 3·grid²`
/// matrix. Rows are scaled by `1/√(3·grid²)`.
#[derive(Debug, Clone)]
pub struct LinearProjection {
    grid: usize,
    matrix: DMatrix<f64>,
}

impl LinearProjection {
    pub fn new(dim: usize, grid: usize, seed: u64) -> Result<Self> {
        if dim == 0 || grid == 0 {
            return Err(Error::Config("test_linear dim and grid must be positive".into()));
        }
        let cols = 3 * grid * grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (cols as f64).sqrt();
        let matrix = DMatrix::from_fn(dim, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Ok(Self { grid, matrix })
    }

    /// Uses an explicit `dim × 3·grid²` matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, grid: usize) -> Result<Self> {
        if grid == 0 || matrix.ncols() != 3 * grid * grid || matrix.nrows() == 0 {
            return Err(Error::Shape(format!(
                "projection must have 3·{grid}² columns, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { grid, matrix })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn pooled(&self, batch: &ImageBatch) -> Result<Tensor> {
        let (h, w) = (batch.height(), batch.width());
        if h % self.grid != 0 || w % self.grid != 0 {
            return Err(Error::Shape(format!(
                "image size {h}x{w} is not divisible by the pooling grid {}",
                self.grid
            )));
        }
        let x = batch.tensor().to_dtype(DType::F64)?;
        let (kh, kw) = (h / self.grid, w / self.grid);
        Ok(x.avg_pool2d_with_stride((kh, kw), (kh, kw))?.flatten_from(1)?)
    }
}

impl FeatureExtractor for LinearProjection {
    fn id(&self) -> ExtractorId {
        ExtractorId::TestLinear
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn features(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        let pooled = self.pooled(batch)?.to_vec2::<f64>()?;
        Ok(pooled
            .into_iter()
            .map(|p| {
                let v = &self.matrix * nalgebra::DVector::from_vec(p);
                v.iter().copied().collect()
            })
            .collect())
    }
}

fn default_dim() -> usize {
    64
}

fn default_grid() -> usize {
    4
}

fn default_url() -> String {
    DEFAULT_INCEPTION_URL.to_string()
}

/// Selects and configures a feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub kind: ExtractorId,
    /// Output dimension of `test_linear`.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Pooling grid of `test_linear`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_url")]
    pub weights_url: String,
    /// Full hex digest or prefix; when absent the hash embedded in the file
    /// name is used.
    #[serde(default)]
    pub weights_sha256: Option<String>,
    /// Defaults to `$XDG_CACHE_HOME/cyclegan-sn` or `~/.cache/cyclegan-sn`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            kind: ExtractorId::InceptionV3Pool3,
            dim: default_dim(),
            grid: default_grid(),
            seed: 0,
            weights_url: default_url(),
            weights_sha256: None,
            cache_dir: None,
        }
    }
}

impl ExtractorConfig {
    pub fn test_linear(dim: usize, seed: u64) -> Self {
        Self {
            kind: ExtractorId::TestLinear,
            dim,
            seed,
            ..Self::default()
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        if let Some(dir) = &self.cache_dir {
            return dir.clone();
        }
        let base = std::env::var_os("XDG_CACHE_HOME")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache")))
            .unwrap_or_else(std::env::temp_dir);
        base.join("cyclegan-sn")
    }

    /// Builds the extractor; the Inception backbone is fetched on first use.
    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>> {
        match self.kind {
            ExtractorId::TestLinear => Ok(Box::new(LinearProjection::new(self.dim, self.grid, self.seed)?)),
            ExtractorId::InceptionV3Pool3 => {
                let path = fetch_weights(&self.weights_url, self.weights_sha256.as_deref(), &self.cache_dir())?;
                let net = InceptionV3::load(&path)?;
                debug_assert_eq!(net.dim(), INCEPTION_DIM);
                Ok(Box::new(net))
            }
        }
    }
}

/// Streams batches through `extractor` into one set of statistics.
pub fn compute_stats<I>(batches: I, extractor: &dyn FeatureExtractor) -> Result<FidStats>
where
    I: IntoIterator<Item = Result<ImageBatch>>,
{
    let mut acc = StatsAccumulator::new(extractor.dim());
    for batch in batches {
        for f in extractor.features(&batch?)? {
            acc.push(&f)?;
        }
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagedata::DomainTag;
    use candle_core::Device;

    fn batch(values: &[f32], n: usize, size: usize) -> ImageBatch {
        let t = Tensor::from_slice(values, (n, 3, size, size), &Device::Cpu).unwrap();
        ImageBatch::new(t, DomainTag::Generated).unwrap()
    }

    #[test]
    fn hand_covariance_through_extractor() {
        // Summing three channel means of 0 or 2/3 gives features (0,0) and (2,2).
        let proj = LinearProjection::from_matrix(DMatrix::from_element(2, 3, 1.0), 1).unwrap();
        let mut v = vec![0.0f32; 3 * 4];
        v.extend(vec![2.0 / 3.0; 3 * 4]);
        let stats = compute_stats([Ok(batch(&v, 2, 2))], &proj).unwrap();
        assert!((stats.mu[0] - 1.0).abs() < 1e-6 && (stats.mu[1] - 1.0).abs() < 1e-6);
        for s in stats.sigma.iter() {
            assert!((s - 2.0).abs() < 1e-5, "{s}");
        }
    }

    #[test]
    fn deterministic_and_seeded() {
        let v: Vec<f32> = (0..2 * 3 * 64).map(|i| ((i * 37 % 200) as f32 / 100.0) - 1.0).collect();
        let b = batch(&v, 2, 8);
        let a = LinearProjection::new(16, 4, 3).unwrap();
        let same = LinearProjection::new(16, 4, 3).unwrap();
        let other = LinearProjection::new(16, 4, 4).unwrap();
        assert_eq!(a.features(&b).unwrap(), same.features(&b).unwrap());
        assert_ne!(a.features(&b).unwrap(), other.features(&b).unwrap());
        assert_eq!(a.features(&b).unwrap()[0].len(), 16);
    }

    #[test]
    fn single_image_is_sample_size_error() {
        let proj = LinearProjection::new(4, 1, 0).unwrap();
        let err = compute_stats([Ok(batch(&[0.0; 3], 1, 1))], &proj).unwrap_err();
        assert!(matches!(err, Error::SampleSize(1)));
    }

    #[test]
    fn indivisible_grid_rejected() {
        let proj = LinearProjection::new(4, 3, 0).unwrap();
        assert!(matches!(proj.features(&batch(&[0.0; 48], 1, 4)), Err(Error::Shape(_))));
    }
}

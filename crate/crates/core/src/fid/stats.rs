use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::extractor::ExtractorId;
use crate::error::IoContext;
use crate::{Error, Result};

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FidStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsHeader {
    d: usize,
    n: usize,
    extractor: ExtractorId,
}

impl FidStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Writes `<stem>.json` (d, n, extractor) and `<stem>.bin` (μ then Σ,
    /// row-major little-endian f64).
    pub fn save(&self, dir: &Path, stem: &str, extractor: ExtractorId) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        let d = self.dim();
        let mut blob = Vec::with_capacity(8 * (d + d * d));
        self.mu.iter().for_each(|v| blob.extend(v.to_le_bytes()));
        for i in 0..d {
            for j in 0..d {
                blob.extend(self.sigma[(i, j)].to_le_bytes());
            }
        }
        let bin = dir.join(format!("{stem}.bin"));
        std::fs::write(&bin, blob).at(&bin)?;
        let json = dir.join(format!("{stem}.json"));
        let header = StatsHeader { d, n: self.n, extractor };
        std::fs::write(&json, serde_json::to_string_pretty(&header)? + "\n").at(&json)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<(Self, ExtractorId)> {
        let json = dir.join(format!("{stem}.json"));
        let header: StatsHeader = serde_json::from_str(&std::fs::read_to_string(&json).at(&json)?)?;
        let bin = dir.join(format!("{stem}.bin"));
        let blob = std::fs::read(&bin).at(&bin)?;
        let d = header.d;
        if blob.len() != 8 * (d + d * d) {
            return Err(Error::Shape(format!(
                "{}: expected {} bytes for d = {d}, found {}",
                bin.display(),
                8 * (d + d * d),
                blob.len()
            )));
        }
        let vals: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mu = DVector::from_column_slice(&vals[..d]);
        let sigma = DMatrix::from_row_slice(d, d, &vals[d..]);
        Ok((Self { mu, sigma, n: header.n }, header.extractor))
    }
}

/// Single-pass mean/co-moment accumulator (Welford, with the pairwise merge
/// rule for batches and shards).
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    n: usize,
    mean: DVector<f64>,
    comoment: DMatrix<f64>,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            comoment: DMatrix::zeros(dim, dim),
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::Shape(format!("feature of length {d}, accumulator holds {}", self.dim())));
        }
        Ok(())
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        self.check(x.len())?;
        self.n += 1;
        let delta = DVector::from_column_slice(x) - &self.mean;
        self.mean += &delta / self.n as f64;
        let w = (self.n - 1) as f64 / self.n as f64;
        self.comoment.ger(w, &delta, &delta, 1.0);
        Ok(())
    }

    /// Adds a block of features by computing its own mean and co-moment and
    /// merging.
    pub fn push_batch(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let d = self.dim();
        for r in rows {
            self.check(r.len())?;
        }
        let k = rows.len();
        let mut x = DMatrix::from_fn(k, d, |i, j| rows[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / k as f64);
        for mut row in x.row_iter_mut() {
            row -= mean.transpose();
        }
        let comoment = x.transpose() * &x;
        self.merge(&Self { n: k, mean, comoment })
    }

    /// Combines another accumulator into this one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.check(other.dim())?;
        if other.n == 0 {
            return Ok(());
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / n);
        self.comoment += &other.comoment;
        self.comoment.ger(na * nb / n, &delta, &delta, 1.0);
        self.n += other.n;
        Ok(())
    }

    pub fn finish(&self) -> Result<FidStats> {
        if self.n < 2 {
            return Err(Error::SampleSize(self.n));
        }
        let sigma = &self.comoment / (self.n - 1) as f64;
        Ok(FidStats {
            mu: self.mean.clone(),
            sigma,
            n: self.n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-pass oracle: exact mean first, then centered products.
    fn two_pass(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let mut cov = vec![vec![0.0; d]; d];
        for r in rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().flatten().for_each(|v| *v /= n - 1.0);
        (mean, cov)
    }

    #[test]
    fn two_points_hand_covariance() {
        let mut acc = StatsAccumulator::new(2);
        acc.push(&[0.0, 0.0]).unwrap();
        acc.push(&[2.0, 2.0]).unwrap();
        let s = acc.finish().unwrap();
        assert_eq!(s.mu.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.sigma, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn identical_samples_have_zero_covariance() {
        let mut acc = StatsAccumulator::new(3);
        for _ in 0..5 {
            acc.push(&[0.25, -1.0, 3.0]).unwrap();
        }
        assert!(acc.finish().unwrap().sigma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_sample_is_too_few() {
        let mut acc = StatsAccumulator::new(2);
        acc.push(&[1.0, 2.0]).unwrap();
        assert!(matches!(acc.finish(), Err(Error::SampleSize(1))));
    }

    #[test]
    fn streaming_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..6).map(|_| rng.random_range(-5.0..5.0) + 3.0).collect())
            .collect();
        let (mean, cov) = two_pass(&rows);

        let mut single = StatsAccumulator::new(6);
        rows.iter().for_each(|r| single.push(r).unwrap());
        let mut blocks = StatsAccumulator::new(6);
        rows.chunks(37).for_each(|c| blocks.push_batch(c).unwrap());
        // Shards merged afterwards.
        let mut left = StatsAccumulator::new(6);
        let mut right = StatsAccumulator::new(6);
        rows[..400].iter().for_each(|r| left.push(r).unwrap());
        rows[400..].iter().for_each(|r| right.push(r).unwrap());
        left.merge(&right).unwrap();

        for acc in [single, blocks, left] {
            let s = acc.finish().unwrap();
            assert_eq!(s.n, 1000);
            for i in 0..6 {
                assert!((s.mu[i] - mean[i]).abs() < 1e-10);
                for j in 0..6 {
                    assert!((s.sigma[(i, j)] - cov[i][j]).abs() < 1e-10);
                    assert!((s.sigma[(i, j)] - s.sigma[(j, i)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut acc = StatsAccumulator::new(3);
        for i in 0..4 {
            acc.push(&[i as f64, (i * i) as f64, 0.5]).unwrap();
        }
        let s = acc.finish().unwrap();
        s.save(dir.path(), "ref", ExtractorId::TestLinear).unwrap();
        let (back, id) = FidStats::load(dir.path(), "ref").unwrap();
        assert_eq!(back, s);
        assert_eq!(id, ExtractorId::TestLinear);
    }
}

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::stats::FidStats;
use crate::{Error, Result};

/// Largest tolerated imaginary part of an eigenvalue square root; smaller
/// residue is discarded.
pub const IMAGINARY_TOLERANCE: f64 = 1e-3;
/// Diagonal offset added to both covariances when either is singular.
pub const REGULARIZATION_EPS: f64 = 1e-6;
/// Negative distances this close to zero are rounding noise.
const NEGATIVE_SLACK: f64 = 1e-6;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{what} is {}x{}, not square", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Square roots of the eigenvalues of a symmetric matrix, with negative
/// eigenvalues inside the imaginary tolerance snapped to zero.
fn sqrt_eigenvalues(eig: &SymmetricEigen<f64, nalgebra::Dyn>, what: &str) -> Result<Vec<f64>> {
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    eig.eigenvalues
        .iter()
        .map(|&l| {
            if l.is_nan() {
                Err(Error::Numerical(format!("{what}: NaN eigenvalue")))
            } else if l >= 0.0 {
                Ok(l.sqrt())
            } else if (-l).sqrt() <= IMAGINARY_TOLERANCE {
                Ok(0.0)
            } else {
                Err(Error::Numerical(format!(
                    "{what}: eigenvalue {l:.3e} gives an imaginary square root (eigenvalue range \
                     [{lo:.3e}, {hi:.3e}]); the covariance is badly estimated, use more samples"
                )))
            }
        })
        .collect()
}

fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = sqrt_eigenvalues(&eig, what)?;
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * roots[j]);
    Ok(symmetrize(&(scaled * q.transpose())))
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(symmetrize(m));
    let hi = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    lo <= 1e-12 * hi.max(1.0)
}

/// `Tr((ΣaΣb)^½)`, computed as the trace of the symmetric similar matrix
/// `(Σa^½ Σb Σa^½)^½`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_square(a, "Σa")?;
    check_square(b, "Σb")?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("covariances {:?} and {:?} differ", a.shape(), b.shape())));
    }
    let ra = psd_sqrt(a, "Σa")?;
    let inner = symmetrize(&(&ra * b * &ra));
    let eig = SymmetricEigen::new(inner);
    Ok(sqrt_eigenvalues(&eig, "Σa^½ Σb Σa^½")?.iter().sum())
}

/// Principal square root of `ΣaΣb`.
///
/// Uses `Σa^½ (Σa^½ Σb Σa^½)^½ Σa^-½`; when either input is singular both get
/// `ε·I` added first.
pub fn matrix_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "Σa")?;
    check_square(b, "Σb")?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("covariances {:?} and {:?} differ", a.shape(), b.shape())));
    }
    let (a, b) = if is_singular(a) || is_singular(b) {
        let eps = DMatrix::identity(a.nrows(), a.ncols()) * REGULARIZATION_EPS;
        (a + &eps, b + &eps)
    } else {
        (a.clone(), b.clone())
    };
    let eig_a = SymmetricEigen::new(symmetrize(&a));
    let roots = sqrt_eigenvalues(&eig_a, "Σa")?;
    let q = &eig_a.eigenvectors;
    let ra = symmetrize(&(DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * roots[j]) * q.transpose()));
    let inv_ra = {
        let inv: Vec<f64> = roots
            .iter()
            .map(|&r| if r > 0.0 { 1.0 / r } else { 0.0 })
            .collect();
        symmetrize(&(DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * inv[j]) * q.transpose()))
    };
    let inner = psd_sqrt(&(&ra * &b * &ra), "Σa^½ Σb Σa^½")?;
    Ok(ra * inner * inv_ra)
}

/// Fréchet distance between two Gaussian summaries.
pub fn frechet_distance(a: &FidStats, b: &FidStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term = (&a.mu - &b.mu).norm_squared();
    let trace_term = a.sigma.trace() + b.sigma.trace() - 2.0 * trace_sqrt_product(&a.sigma, &b.sigma)?;
    let d = mean_term + trace_term;
    if d < -NEGATIVE_SLACK {
        return Err(Error::Numerical(format!(
            "Fréchet distance came out negative ({d:.3e}); covariances are ill-conditioned"
        )));
    }
    Ok(d.max(0.0))
}

/// Weights of the target-domain and input-domain distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidWeights {
    pub target: f64,
    pub input: f64,
}

impl Default for FidWeights {
    fn default() -> Self {
        Self { target: 0.8, input: 0.2 }
    }
}

impl FidWeights {
    pub fn new(target: f64, input: f64) -> Result<Self> {
        let w = Self { target, input };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target < 0.0 || self.input < 0.0 || (self.target + self.input - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "FID weights must be non-negative and sum to 1, got {} + {}",
                self.target, self.input
            )));
        }
        Ok(())
    }

    pub fn combine(&self, vs_target: f64, vs_input: f64) -> f64 {
        self.target * vs_target + self.input * vs_input
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedFid {
    pub score: f64,
    /// Plain FID of the generated set against the target (photo) domain.
    pub vs_target: f64,
    /// Plain FID of the generated set against the input (cartoon) domain.
    pub vs_input: f64,
}

pub fn weighted_fid(gen: &FidStats, real: &FidStats, cartoon: &FidStats, weights: FidWeights) -> Result<WeightedFid> {
    weights.validate()?;
    let vs_target = frechet_distance(gen, real)?;
    let vs_input = frechet_distance(gen, cartoon)?;
    Ok(WeightedFid {
        score: weights.combine(vs_target, vs_input),
        vs_target,
        vs_input,
    })
}

//! Spectral normalization by power iteration.
//!
//! Each normalized weight keeps a persistent unit vector `u` estimating the
//! leading left singular vector of its `(out_channels, rest)` matrix view.
//! A training forward pass advances the estimate by one step and divides the
//! weight by `σ = uᵀ W v`, where `u` and `v` are constants, so gradients flow
//! through σ as a function of `W`. Evaluation passes reuse `u` unchanged.

use candle_core::{DType, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// σ at or below this is treated as a zero matrix.
pub const DEGENERATE_SIGMA: f64 = 1e-12;

/// Row-major `rows × cols` matrix borrowed from a flat buffer.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix view {rows}x{cols} over a buffer of {} values",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `W x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Wᵀ y`
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * yi;
                }
            }
        }
        out
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn scale(x: &mut [f64], by: f64) {
    x.iter_mut().for_each(|v| *v *= by);
}

/// Result of one estimate: `σ = uᵀ W v` with both vectors unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// The matrix annihilates `u`; `sigma` is reported as 0 and `u` is kept.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    u: Vec<f64>,
    iteration_count: u64,
}

impl SpectralState {
    /// Random unit vector of length `rows`.
    pub fn random<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&u);
        if n > 0.0 {
            scale(&mut u, 1.0 / n);
        } else {
            u[0] = 1.0;
        }
        Self { u, iteration_count: 0 }
    }

    /// Starts from a given vector, normalized to unit length.
    pub fn from_vector(mut u: Vec<f64>) -> Result<Self> {
        let n = norm(&u);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Numerical("spectral state needs a non-zero finite vector".into()));
        }
        scale(&mut u, 1.0 / n);
        Ok(Self { u, iteration_count: 0 })
    }

    /// Rebuilds a saved state bit-for-bit.
    pub fn restore(u: Vec<f64>, iteration_count: u64) -> Result<Self> {
        if (norm(&u) - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical("saved spectral vector is not unit-norm".into()));
        }
        Ok(Self { u, iteration_count })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn iteration_count(&self) -> u64 {
        self.iteration_count
    }

    fn check_rows(&self, w: &MatrixView) -> Result<()> {
        if w.rows != self.u.len() {
            return Err(Error::Shape(format!(
                "spectral state holds {} rows, weight matrix has {}",
                self.u.len(),
                w.rows
            )));
        }
        Ok(())
    }

    /// Runs `steps` power-iteration updates and returns the final estimate.
    pub fn power_iterate(&mut self, w: &MatrixView, steps: usize) -> Result<PowerEstimate> {
        if steps == 0 {
            return Err(Error::Config("power iteration needs at least one step".into()));
        }
        self.check_rows(w)?;
        let mut last = None;
        for _ in 0..steps {
            let mut v = w.apply_transpose(&self.u);
            let nv = norm(&v);
            if nv <= DEGENERATE_SIGMA {
                return Ok(self.degenerate_estimate(w.cols));
            }
            scale(&mut v, 1.0 / nv);
            let mut u = w.apply(&v);
            let nu = norm(&u);
            if nu <= DEGENERATE_SIGMA {
                return Ok(self.degenerate_estimate(w.cols));
            }
            scale(&mut u, 1.0 / nu);
            self.u = u;
            self.iteration_count += 1;
            last = Some((nu, v));
        }
        let (sigma, v) = last.expect("steps >= 1");
        Ok(PowerEstimate {
            sigma,
            u: self.u.clone(),
            v,
            degenerate: false,
        })
    }

    /// Iterates until σ changes by less than `rel_tol` between steps, up to
    /// `max_steps`.
    pub fn warm_up(&mut self, w: &MatrixView, max_steps: usize, rel_tol: f64) -> Result<PowerEstimate> {
        let mut est = self.power_iterate(w, 1)?;
        for _ in 1..max_steps {
            let next = self.power_iterate(w, 1)?;
            let done = next.degenerate || (next.sigma - est.sigma).abs() <= rel_tol * next.sigma;
            est = next;
            if done {
                break;
            }
        }
        Ok(est)
    }

    /// Estimate from the current `u` without updating it: `v ∝ Wᵀu`,
    /// `σ = ‖Wᵀu‖`.
    pub fn estimate(&self, w: &MatrixView) -> Result<PowerEstimate> {
        self.check_rows(w)?;
        let mut v = w.apply_transpose(&self.u);
        let nv = norm(&v);
        if nv <= DEGENERATE_SIGMA {
            return Ok(self.degenerate_estimate(w.cols));
        }
        scale(&mut v, 1.0 / nv);
        Ok(PowerEstimate {
            sigma: nv,
            u: self.u.clone(),
            v,
            degenerate: false,
        })
    }

    fn degenerate_estimate(&self, cols: usize) -> PowerEstimate {
        PowerEstimate {
            sigma: 0.0,
            u: self.u.clone(),
            v: vec![0.0; cols],
            degenerate: true,
        }
    }
}

/// Flattens a weight tensor of shape `(out, ...)` into its `(out, rest)`
/// matrix view as host f64 values.
pub fn matrix_of(weight: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let dims = weight.dims();
    let rows = *dims
        .first()
        .ok_or_else(|| Error::Shape("cannot normalize a scalar weight".into()))?;
    let cols = weight.elem_count() / rows.max(1);
    let data = weight
        .detach()
        .to_dtype(DType::F64)?
        .flatten_all()?
        .to_vec1::<f64>()?;
    Ok((data, rows, cols))
}

/// Divides `weight` by its spectral-norm estimate.
///
/// With `advance` the state takes one power-iteration step first (training);
/// otherwise `u` is reused as-is (evaluation). A degenerate (zero) weight is
/// returned unchanged with a warning.
pub fn spectral_normalize(
    weight: &Tensor,
    state: &mut SpectralState,
    advance: bool,
) -> Result<(Tensor, PowerEstimate)> {
    let (data, rows, cols) = matrix_of(weight)?;
    let view = MatrixView::new(&data, rows, cols)?;
    let est = if advance {
        state.power_iterate(&view, 1)?
    } else {
        state.estimate(&view)?
    };
    if est.degenerate {
        log::warn!("spectral norm of a {rows}x{cols} weight is zero; leaving it unnormalized");
        return Ok((weight.clone(), est));
    }
    let dtype = weight.dtype();
    let device = weight.device();
    let u = Tensor::from_vec(est.u.clone(), (1, rows), device)?.to_dtype(dtype)?;
    let v = Tensor::from_vec(est.v.clone(), (cols, 1), device)?.to_dtype(dtype)?;
    let sigma = u.matmul(&weight.reshape((rows, cols))?)?.matmul(&v)?.reshape(())?;
    Ok((weight.broadcast_div(&sigma)?, est))
}

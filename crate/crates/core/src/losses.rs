//! Training objectives.
//!
//! Adversarial terms are least-squares: generators push patch scores toward
//! 1, discriminators push real scores to 1 and generated scores to 0.
//! Reconstruction terms are mean absolute errors over the two translation
//! cycles. Patch maps and pixels are averaged, never summed.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::models::GeneratorRole;
use crate::{Error, Result};

/// Default weight of the reconstruction terms in the generator objective.
pub const DEFAULT_LAMBDA_CYC: f64 = 10.0;

/// The forward cycle `c → G_r(c) → F_r(G_r(c))` closes with the
/// cartoon-producing generator, i.e. `F_r` is `G_c`.
pub const FORWARD_RECONSTRUCTOR: GeneratorRole = GeneratorRole::ToCartoon;
/// The backward cycle `r → G_c(r) → G_r(G_c(r))`.
pub const BACKWARD_RECONSTRUCTOR: GeneratorRole = GeneratorRole::ToReal;

/// `mean((1 − D(G(x)))²)` over batch and patches.
pub fn lsgan_generator_loss(d_fake: &Tensor) -> Result<Tensor> {
    Ok(d_fake.affine(-1.0, 1.0)?.sqr()?.mean_all()?)
}

/// `½·mean((D(real) − 1)²) + ½·mean(D(fake)²)`.
pub fn lsgan_discriminator_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    let real = d_real.affine(1.0, -1.0)?.sqr()?.mean_all()?;
    let fake = d_fake.sqr()?.mean_all()?;
    Ok(((real + fake)? * 0.5)?)
}

/// Mean absolute difference between an image batch and its reconstruction.
pub fn reconstruction_loss(x: &Tensor, x_rec: &Tensor) -> Result<Tensor> {
    if x.dims() != x_rec.dims() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} does not match input {:?}",
            x_rec.dims(),
            x.dims()
        )));
    }
    Ok((x - x_rec)?.abs()?.mean_all()?)
}

/// Reads a scalar loss tensor as f64.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// The six per-step loss terms before aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub g_r_adv: f64,
    pub g_c_adv: f64,
    pub d_r: f64,
    pub d_c: f64,
    pub forward_cyc: f64,
    pub backward_cyc: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g_r_adv: f64,
    pub g_c_adv: f64,
    pub d_r: f64,
    pub d_c: f64,
    pub forward_cyc: f64,
    pub backward_cyc: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("g_r_adv", self.g_r_adv),
            ("g_c_adv", self.g_c_adv),
            ("d_r", self.d_r),
            ("d_c", self.d_c),
            ("forward_cyc", self.forward_cyc),
            ("backward_cyc", self.backward_cyc),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
        ]
    }

    /// Fails on the first non-finite component, dumping all of them.
    pub fn check_finite(&self) -> Result<()> {
        if let Some((component, value)) = self.named().into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                component,
                value,
                dump: serde_json::to_string(self).unwrap_or_default(),
            });
        }
        Ok(())
    }
}

/// Fills in the generator and discriminator totals:
/// `total_g = g_r_adv + g_c_adv + λ·(forward_cyc + backward_cyc)`,
/// `total_d = d_r + d_c`.
pub fn total_objective(parts: LossComponents, lambda_cyc: f64) -> Result<LossReport> {
    if !(lambda_cyc >= 0.0 && lambda_cyc.is_finite()) {
        return Err(Error::Config(format!("λ_cyc must be ≥ 0, got {lambda_cyc}")));
    }
    Ok(LossReport {
        g_r_adv: parts.g_r_adv,
        g_c_adv: parts.g_c_adv,
        d_r: parts.d_r,
        d_c: parts.d_c,
        forward_cyc: parts.forward_cyc,
        backward_cyc: parts.backward_cyc,
        total_g: parts.g_r_adv + parts.g_c_adv + lambda_cyc * (parts.forward_cyc + parts.backward_cyc),
        total_d: parts.d_r + parts.d_c,
    })
}

//! Generator and discriminator networks.
//!
//! The generator is a residual image-transformation network:
//! `c7s1-64, d128, d256, 6×R256, u128, u64, c7s1-3` with reflection padding,
//! instance normalization, and a final `tanh`. The discriminator is a PatchGAN
//! stack of 4×4 convolutions `C64-C128-C256` (stride 2), `C512` (stride 1),
//! and a 1-channel output convolution, with leaky rectifiers and optional
//! spectral normalization of every convolution. With the default layout one
//! output unit sees a 70×70 input patch.
//!
//! Both layouts are configurable so reduced-width networks can be trained at
//! desk scale.

pub(crate) mod archive;
mod discriminator;
mod generator;
mod layers;

pub use archive::{read_archive, write_archive, ArchiveManifest, TensorEntry};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};
pub use layers::{conv2d, conv_transpose2d, instance_norm, leaky_relu, reflect_pad};

use candle_core::Var;
use serde::{Deserialize, Serialize};

/// Which way a generator translates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorRole {
    /// Cartoon → photo (`G_r`).
    ToReal,
    /// Photo → cartoon (`G_c`).
    ToCartoon,
}

/// Ordered `(name, variable)` pairs of one network.
pub type NamedVars = Vec<(String, Var)>;

/// Total number of scalar parameters.
pub fn parameter_count(vars: &NamedVars) -> usize {
    vars.iter().map(|(_, v)| v.elem_count()).sum()
}

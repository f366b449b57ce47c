//! Unpaired cartoon-to-photo image translation.
//!
//! Two residual generators (cartoon → photo and photo → cartoon) are trained
//! against two PatchGAN discriminators whose convolutions are spectrally
//! normalized. Objectives are least-squares adversarial losses plus L1
//! reconstruction (cycle) losses. The crate also ships the dataset curation
//! pipeline used to build the two corpora and a weighted Fréchet Inception
//! Distance harness for evaluation.

pub mod cli;
pub mod error;
pub mod fid;
pub mod imagedata;
pub mod losses;
pub mod models;
pub mod specnorm;
pub mod trainer;

pub use error::{Error, Result};

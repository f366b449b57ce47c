use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive;
use super::layers::{add_bias, const_var, conv2d, leaky_relu, normal_var};
use super::NamedVars;
use crate::specnorm::{spectral_normalize, SpectralState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Filters of each hidden convolution.
    pub filters: Vec<usize>,
    /// Stride of each hidden convolution; the output convolution has stride 1.
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub leaky_slope: f64,
    pub spectral_norm: bool,
    pub init_std: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            filters: vec![64, 128, 256, 512],
            strides: vec![2, 2, 2, 1],
            kernel: 4,
            padding: 1,
            leaky_slope: 0.2,
            spectral_norm: true,
            init_std: 0.02,
        }
    }
}

impl DiscriminatorConfig {
    /// Two hidden layers (8, 16 filters); 16×16 receptive field.
    pub fn tiny() -> Self {
        Self {
            filters: vec![8, 16],
            strides: vec![2, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.filters.len() != self.strides.len() {
            return Err(Error::Config(format!(
                "discriminator needs one stride per hidden layer, got {:?} / {:?}",
                self.filters, self.strides
            )));
        }
        if self.kernel == 0 || self.strides.contains(&0) || self.filters.contains(&0) {
            return Err(Error::Config("discriminator kernel, strides and filters must be ≥ 1".into()));
        }
        Ok(())
    }

    fn layer_strides(&self) -> impl Iterator<Item = usize> + '_ {
        self.strides.iter().copied().chain(std::iter::once(1))
    }

    /// Input pixels seen by one output unit (per side).
    pub fn receptive_field(&self) -> usize {
        let strides: Vec<usize> = self.layer_strides().collect();
        strides
            .iter()
            .rev()
            .fold(1, |rf, &s| (rf - 1) * s + self.kernel)
    }

    /// Patch-map side length for an input side length.
    pub fn output_size(&self, input: usize) -> Option<usize> {
        self.layer_strides().try_fold(input, |n, s| {
            (n + 2 * self.padding)
                .checked_sub(self.kernel)
                .map(|r| r / s + 1)
        })
    }
}

/// PatchGAN discriminator returning raw (unsquashed) patch scores.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    weights: Vec<Var>,
    biases: Vec<Var>,
    spectral: Vec<SpectralState>,
}

impl Discriminator {
    pub fn new(config: &DiscriminatorConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let dev = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut cin = 3;
        for &cout in config.filters.iter().chain(std::iter::once(&1)) {
            weights.push(normal_var(&[cout, cin, k, k], config.init_std, &mut rng, dtype, &dev)?);
            biases.push(const_var(&[cout], 0.0, dtype, &dev)?);
            cin = cout;
        }
        let spectral = weights
            .iter()
            .map(|w| SpectralState::random(w.dims()[0], &mut rng))
            .collect();
        Ok(Self {
            config: config.clone(),
            weights,
            biases,
            spectral,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn named_vars(&self) -> NamedVars {
        let last = self.weights.len() - 1;
        let name = |i: usize| if i == last { "out".to_string() } else { format!("conv{i}") };
        self.weights
            .iter()
            .zip(&self.biases)
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("{}.weight", name(i)), w.clone()),
                    (format!("{}.bias", name(i)), b.clone()),
                ]
            })
            .collect()
    }

    pub fn spectral_states(&self) -> &[SpectralState] {
        &self.spectral
    }

    pub fn set_spectral_states(&mut self, states: Vec<SpectralState>) -> Result<()> {
        if states.len() != self.spectral.len()
            || states.iter().zip(&self.spectral).any(|(a, b)| a.u().len() != b.u().len())
        {
            return Err(Error::Shape("spectral states do not match the discriminator layout".into()));
        }
        self.spectral = states;
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let rf = self.config.receptive_field();
        if c != 3 {
            return Err(Error::Shape(format!("discriminator expects 3 channels, got {c}")));
        }
        if h < rf || w < rf {
            return Err(Error::Shape(format!(
                "discriminator input {h}x{w} is smaller than its {rf}x{rf} receptive field"
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, states: &mut [SpectralState], train: bool) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let strides: Vec<usize> = self.config.layer_strides().collect();
        let mut y = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (w, b) = if train {
                (w.as_tensor().clone(), b.as_tensor().clone())
            } else {
                (w.as_detached_tensor(), b.as_detached_tensor())
            };
            let w = if self.config.spectral_norm {
                spectral_normalize(&w, &mut states[i], train)?.0
            } else {
                w
            };
            y = add_bias(&conv2d(&y, &w, self.config.padding, strides[i])?, &b)?;
            if i != last {
                y = leaky_relu(&y, self.config.leaky_slope)?;
            }
        }
        Ok(y)
    }

    /// Training pass: every spectral state advances one power-iteration step
    /// and gradients flow into the discriminator's parameters.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut states = std::mem::take(&mut self.spectral);
        let out = self.run(x, &mut states, true);
        self.spectral = states;
        out
    }

    /// Evaluation pass: spectral states are read, never written, and the
    /// parameters are detached (gradients reach only the input).
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut states = self.spectral.clone();
        self.run(x, &mut states, false)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut tensors: Vec<(String, Tensor)> = self
            .named_vars()
            .into_iter()
            .map(|(n, v)| (n, v.as_detached_tensor()))
            .collect();
        archive::write_archive(dir, "params", &tensors)?;
        tensors.clear();
        for (i, s) in self.spectral.iter().enumerate() {
            tensors.push((format!("u{i}"), Tensor::new(s.u(), &Device::Cpu)?));
        }
        archive::write_archive(dir, "spectral", &tensors)?;
        let counts: Vec<u64> = self.spectral.iter().map(SpectralState::iteration_count).collect();
        let path = dir.join("spectral_steps.json");
        std::fs::write(&path, serde_json::to_string(&counts)?).map_err(|source| Error::Io { path, source })
    }

    pub fn load(config: &DiscriminatorConfig, dir: &Path, dtype: DType) -> Result<Self> {
        let mut d = Self::new(config, 0, dtype)?;
        archive::load_into(&d.named_vars(), dir, "params")?;
        let us = archive::read_archive(dir, "spectral")?;
        let path = dir.join("spectral_steps.json");
        let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path: path.clone(), source })?;
        let counts: Vec<u64> = serde_json::from_str(&text)?;
        if us.len() != d.spectral.len() || counts.len() != us.len() {
            return Err(Error::Checkpoint {
                path: dir.to_path_buf(),
                reason: format!("expected {} spectral vectors, found {}", d.spectral.len(), us.len()),
            });
        }
        let states = us
            .into_iter()
            .zip(counts)
            .map(|((_, t), n)| SpectralState::restore(t.to_vec1::<f64>()?, n))
            .collect::<Result<Vec<_>>>()?;
        d.set_spectral_states(states)?;
        Ok(d)
    }
}

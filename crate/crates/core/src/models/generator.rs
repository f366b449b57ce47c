use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive;
use super::layers::{add_bias, const_var, conv2d, conv_transpose2d, instance_norm, normal_var, reflect_pad};
use super::NamedVars;
use crate::imagedata::{DomainTag, ImageBatch};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Filters of the first convolution; doubles at each downsampling.
    pub base_filters: usize,
    pub n_downsample: usize,
    pub n_residual: usize,
    /// Kernel of the first and last convolutions.
    pub outer_kernel: usize,
    /// Kernel of the strided, residual and fractional-strided convolutions.
    pub inner_kernel: usize,
    pub norm_eps: f64,
    pub init_std: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_filters: 64,
            n_downsample: 2,
            n_residual: 6,
            outer_kernel: 7,
            inner_kernel: 3,
            norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl GeneratorConfig {
    /// 4/8/16 filters and a single residual block.
    pub fn tiny() -> Self {
        Self {
            base_filters: 4,
            n_residual: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 || self.outer_kernel.is_multiple_of(2) || self.inner_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "generator needs ≥1 filter and odd kernels, got {self:?}"
            )));
        }
        Ok(())
    }

    fn widest(&self) -> usize {
        self.base_filters << self.n_downsample
    }
}

#[derive(Debug, Clone)]
struct Norm {
    scale: Var,
    shift: Var,
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Var,
    norm1: Norm,
    conv2: Var,
    norm2: Norm,
}

/// Residual image-to-image generator.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    stem: (Var, Norm),
    down: Vec<(Var, Norm)>,
    blocks: Vec<ResBlock>,
    up: Vec<(Var, Norm)>,
    head_weight: Var,
    head_bias: Var,
}

impl Generator {
    /// Convolution weights ~ N(0, init_std²), norms at scale 1 / shift 0,
    /// output bias 0.
    pub fn new(config: &GeneratorConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let dev = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = config.init_std;
        let (ko, ki) = (config.outer_kernel, config.inner_kernel);
        let norm = |c: usize| -> Result<Norm> {
            Ok(Norm {
                scale: const_var(&[c], 1.0, dtype, &dev)?,
                shift: const_var(&[c], 0.0, dtype, &dev)?,
            })
        };
        let nf = config.base_filters;
        let stem = (normal_var(&[nf, 3, ko, ko], std, &mut rng, dtype, &dev)?, norm(nf)?);
        let mut down = Vec::new();
        for i in 0..config.n_downsample {
            let (cin, cout) = (nf << i, nf << (i + 1));
            down.push((normal_var(&[cout, cin, ki, ki], std, &mut rng, dtype, &dev)?, norm(cout)?));
        }
        let w = config.widest();
        let mut blocks = Vec::new();
        for _ in 0..config.n_residual {
            blocks.push(ResBlock {
                conv1: normal_var(&[w, w, ki, ki], std, &mut rng, dtype, &dev)?,
                norm1: norm(w)?,
                conv2: normal_var(&[w, w, ki, ki], std, &mut rng, dtype, &dev)?,
                norm2: norm(w)?,
            });
        }
        let mut up = Vec::new();
        for i in (0..config.n_downsample).rev() {
            let (cin, cout) = (nf << (i + 1), nf << i);
            // Transposed-convolution kernels are laid out (in, out, k, k).
            up.push((normal_var(&[cin, cout, ki, ki], std, &mut rng, dtype, &dev)?, norm(cout)?));
        }
        let head_weight = normal_var(&[3, nf, ko, ko], std, &mut rng, dtype, &dev)?;
        let head_bias = const_var(&[3], 0.0, dtype, &dev)?;
        Ok(Self {
            config: config.clone(),
            stem,
            down,
            blocks,
            up,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.head_weight.dtype()
    }

    pub fn named_vars(&self) -> NamedVars {
        let mut out = Vec::new();
        let push_norm = |out: &mut NamedVars, prefix: &str, n: &Norm| {
            out.push((format!("{prefix}.scale"), n.scale.clone()));
            out.push((format!("{prefix}.shift"), n.shift.clone()));
        };
        out.push(("stem.conv.weight".into(), self.stem.0.clone()));
        push_norm(&mut out, "stem.norm", &self.stem.1);
        for (i, (w, n)) in self.down.iter().enumerate() {
            out.push((format!("down{i}.conv.weight"), w.clone()));
            push_norm(&mut out, &format!("down{i}.norm"), n);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("res{i}.conv1.weight"), b.conv1.clone()));
            push_norm(&mut out, &format!("res{i}.norm1"), &b.norm1);
            out.push((format!("res{i}.conv2.weight"), b.conv2.clone()));
            push_norm(&mut out, &format!("res{i}.norm2"), &b.norm2);
        }
        for (i, (w, n)) in self.up.iter().enumerate() {
            out.push((format!("up{i}.convt.weight"), w.clone()));
            push_norm(&mut out, &format!("up{i}.norm"), n);
        }
        out.push(("head.conv.weight".into(), self.head_weight.clone()));
        out.push(("head.conv.bias".into(), self.head_bias.clone()));
        out
    }

    pub fn residual_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Spatial sizes must be divisible by `2^n_downsample`.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.config.n_downsample;
        let pad = self.config.outer_kernel / 2;
        if !h.is_multiple_of(f) || !w.is_multiple_of(f) || h <= pad || w <= pad || h / f < 2 || w / f < 2 {
            return Err(Error::Shape(format!(
                "generator input {h}x{w} must be divisible by {f} and at least {}x{0}",
                (2 * f).max(pad + 1)
            )));
        }
        Ok(())
    }

    /// Differentiable forward pass on a raw `(N, 3, H, W)` tensor.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!("generator expects 3 channels, got {c}")));
        }
        self.check_input(h, w)?;
        let eps = self.config.norm_eps;
        let (outer, inner) = (self.config.outer_kernel / 2, self.config.inner_kernel / 2);
        let norm_relu = |x: &Tensor, n: &Norm| -> Result<Tensor> {
            Ok(instance_norm(x, n.scale.as_tensor(), n.shift.as_tensor(), eps)?.relu()?)
        };

        let mut y = conv2d(&reflect_pad(x, outer)?, self.stem.0.as_tensor(), 0, 1)?;
        y = norm_relu(&y, &self.stem.1)?;
        for (wt, n) in &self.down {
            y = norm_relu(&conv2d(&y, wt.as_tensor(), inner, 2)?, n)?;
        }
        for b in &self.blocks {
            let r = conv2d(&reflect_pad(&y, inner)?, b.conv1.as_tensor(), 0, 1)?;
            let r = norm_relu(&r, &b.norm1)?;
            let r = conv2d(&reflect_pad(&r, inner)?, b.conv2.as_tensor(), 0, 1)?;
            let r = instance_norm(&r, b.norm2.scale.as_tensor(), b.norm2.shift.as_tensor(), eps)?;
            y = (y + r)?;
        }
        for (wt, n) in &self.up {
            y = norm_relu(&conv_transpose2d(&y, wt.as_tensor(), inner, 1, 2)?, n)?;
        }
        let y = conv2d(&reflect_pad(&y, outer)?, self.head_weight.as_tensor(), 0, 1)?;
        Ok(add_bias(&y, self.head_bias.as_tensor())?.tanh()?)
    }

    /// Translates a batch; the result is tagged as generated.
    pub fn forward(&self, x: &ImageBatch) -> Result<ImageBatch> {
        let y = self.forward_tensor(&x.tensor().to_dtype(self.dtype())?)?.detach();
        ImageBatch::new(y, DomainTag::Generated)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let tensors: Vec<(String, Tensor)> = self
            .named_vars()
            .into_iter()
            .map(|(n, v)| (n, v.as_detached_tensor()))
            .collect();
        archive::write_archive(dir, "params", &tensors)
    }

    /// Rebuilds a generator for `config` and loads its parameters from `dir`.
    pub fn load(config: &GeneratorConfig, dir: &Path, dtype: DType) -> Result<Self> {
        let g = Self::new(config, 0, dtype)?;
        archive::load_into(&g.named_vars(), dir, "params")?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::parameter_count;
    use rand::Rng;

    fn random_input(shape: (usize, usize, usize, usize), seed: u64, dtype: DType) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2 * shape.3;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap().to_dtype(dtype).unwrap()
    }

    fn bits(g: &Generator) -> Vec<u32> {
        g.named_vars()
            .iter()
            .flat_map(|(_, v)| v.flatten_all().unwrap().to_vec1::<f32>().unwrap())
            .map(f32::to_bits)
            .collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = GeneratorConfig::tiny();
        let a = Generator::new(&cfg, 5, DType::F32).unwrap();
        let b = Generator::new(&cfg, 5, DType::F32).unwrap();
        let c = Generator::new(&cfg, 6, DType::F32).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn default_layout_has_six_blocks() {
        let g = Generator::new(&GeneratorConfig::default(), 0, DType::F32).unwrap();
        assert_eq!(g.residual_blocks(), 6);
        let shapes: Vec<_> = g.named_vars().iter().map(|(n, v)| (n.clone(), v.dims().to_vec())).collect();
        assert!(shapes.contains(&("stem.conv.weight".into(), vec![64, 3, 7, 7])));
        assert!(shapes.contains(&("down1.conv.weight".into(), vec![256, 128, 3, 3])));
        assert!(shapes.contains(&("res5.conv2.weight".into(), vec![256, 256, 3, 3])));
        assert!(shapes.contains(&("up1.convt.weight".into(), vec![128, 64, 3, 3])));
        assert!(shapes.contains(&("head.conv.weight".into(), vec![3, 64, 7, 7])));
    }

    #[test]
    fn preserves_spatial_size() {
        let g = Generator::new(&GeneratorConfig::tiny(), 1, DType::F32).unwrap();
        let before = parameter_count(&g.named_vars());
        for size in [16, 32, 64] {
            let x = random_input((2, 3, size, size), 0, DType::F32);
            let y = g.forward_tensor(&x).unwrap();
            assert_eq!(y.dims(), &[2, 3, size, size]);
            let hi = y.abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
            assert!(hi < 1.0);
        }
        assert_eq!(before, parameter_count(&g.named_vars()));
    }

    #[test]
    fn rejects_indivisible_input() {
        let g = Generator::new(&GeneratorConfig::tiny(), 1, DType::F32).unwrap();
        let x = random_input((1, 3, 18, 16), 0, DType::F32);
        assert!(matches!(g.forward_tensor(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_weights_give_zero_image() {
        let cfg = GeneratorConfig {
            init_std: 0.0,
            ..GeneratorConfig::tiny()
        };
        let g = Generator::new(&cfg, 0, DType::F32).unwrap();
        let y = g.forward_tensor(&random_input((1, 3, 16, 16), 3, DType::F32)).unwrap();
        assert_eq!(y.abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap(), 0.0);
    }

    #[test]
    fn deterministic_forward() {
        let g = Generator::new(&GeneratorConfig::tiny(), 2, DType::F32).unwrap();
        let x = random_input((1, 3, 32, 32), 4, DType::F32);
        let a = g.forward_tensor(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = g.forward_tensor(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip_and_mismatch_diff() {
        let dir = tempfile::tempdir().unwrap();
        let g = Generator::new(&GeneratorConfig::tiny(), 9, DType::F32).unwrap();
        g.save(dir.path()).unwrap();
        let back = Generator::load(&GeneratorConfig::tiny(), dir.path(), DType::F32).unwrap();
        assert_eq!(bits(&g), bits(&back));
        let other = GeneratorConfig {
            n_residual: 2,
            ..GeneratorConfig::tiny()
        };
        let err = Generator::load(&other, dir.path(), DType::F32).unwrap_err().to_string();
        assert!(err.contains("missing res1.conv1.weight"), "{err}");
    }

    /// Analytic gradients of `sum(G(x))` against central differences, in f64.
    #[test]
    fn gradients_match_finite_differences() {
        let g = Generator::new(&GeneratorConfig { init_std: 0.3, ..GeneratorConfig::tiny() }, 7, DType::F64).unwrap();
        let x = random_input((1, 3, 16, 16), 8, DType::F64);
        let f = |g: &Generator| -> f64 {
            g.forward_tensor(&x).unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap()
        };
        let grads = g.forward_tensor(&x).unwrap().sum_all().unwrap().backward().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-5;
        for (name, var) in g.named_vars() {
            let analytic = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let base = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            for _ in 0..3 {
                let i = rng.random_range(0..base.len());
                let probe = |delta: f64| {
                    let mut p = base.clone();
                    p[i] += delta;
                    var.set(&Tensor::from_vec(p, var.shape(), &Device::Cpu).unwrap()).unwrap();
                    let out = f(&g);
                    var.set(&Tensor::from_vec(base.clone(), var.shape(), &Device::Cpu).unwrap()).unwrap();
                    out
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-4);
                assert!(rel < 1e-3, "{name}[{i}]: analytic {} numeric {numeric}", analytic[i]);
            }
        }
    }
}

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::extractor::{ExtractorId, FeatureExtractor};
use crate::imagedata::ImageBatch;
use crate::{Error, Result};

/// Side length the backbone expects.
pub const INCEPTION_INPUT: usize = 299;
/// Width of the final average-pooled feature.
pub const INCEPTION_DIM: usize = 2048;
const BN_EPS: f64 = 1e-3;

/// Convolution with batch norm folded into weight and bias, then ReLU.
#[derive(Debug, Clone)]
struct Conv {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    pad: (usize, usize),
}

impl Conv {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (ph, pw) = self.pad;
        let (x, p) = if ph == pw {
            (x.clone(), ph)
        } else {
            (x.pad_with_zeros(2, ph, ph)?.pad_with_zeros(3, pw, pw)?, 0)
        };
        let y = x.conv2d(&self.weight, p, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?.relu()?)
    }
}

/// Shape of one conv unit: `(name, in, out, (kh, kw), stride, (ph, pw))`.
type ConvSpec = (String, usize, usize, (usize, usize), usize, (usize, usize));

fn spec(name: &str, cin: usize, cout: usize, k: (usize, usize), stride: usize, pad: (usize, usize)) -> ConvSpec {
    (name.to_string(), cin, cout, k, stride, pad)
}

fn block_a(p: &str, cin: usize, pool: usize) -> Vec<ConvSpec> {
    vec![
        spec(&format!("{p}.branch1x1"), cin, 64, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch5x5_1"), cin, 48, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch5x5_2"), 48, 64, (5, 5), 1, (2, 2)),
        spec(&format!("{p}.branch3x3dbl_1"), cin, 64, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3dbl_2"), 64, 96, (3, 3), 1, (1, 1)),
        spec(&format!("{p}.branch3x3dbl_3"), 96, 96, (3, 3), 1, (1, 1)),
        spec(&format!("{p}.branch_pool"), cin, pool, (1, 1), 1, (0, 0)),
    ]
}

fn block_b(p: &str, cin: usize) -> Vec<ConvSpec> {
    vec![
        spec(&format!("{p}.branch3x3"), cin, 384, (3, 3), 2, (0, 0)),
        spec(&format!("{p}.branch3x3dbl_1"), cin, 64, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3dbl_2"), 64, 96, (3, 3), 1, (1, 1)),
        spec(&format!("{p}.branch3x3dbl_3"), 96, 96, (3, 3), 2, (0, 0)),
    ]
}

fn block_c(p: &str, cin: usize, c7: usize) -> Vec<ConvSpec> {
    vec![
        spec(&format!("{p}.branch1x1"), cin, 192, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch7x7_1"), cin, c7, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch7x7_2"), c7, c7, (1, 7), 1, (0, 3)),
        spec(&format!("{p}.branch7x7_3"), c7, 192, (7, 1), 1, (3, 0)),
        spec(&format!("{p}.branch7x7dbl_1"), cin, c7, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch7x7dbl_2"), c7, c7, (7, 1), 1, (3, 0)),
        spec(&format!("{p}.branch7x7dbl_3"), c7, c7, (1, 7), 1, (0, 3)),
        spec(&format!("{p}.branch7x7dbl_4"), c7, c7, (7, 1), 1, (3, 0)),
        spec(&format!("{p}.branch7x7dbl_5"), c7, 192, (1, 7), 1, (0, 3)),
        spec(&format!("{p}.branch_pool"), cin, 192, (1, 1), 1, (0, 0)),
    ]
}

fn block_d(p: &str, cin: usize) -> Vec<ConvSpec> {
    vec![
        spec(&format!("{p}.branch3x3_1"), cin, 192, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3_2"), 192, 320, (3, 3), 2, (0, 0)),
        spec(&format!("{p}.branch7x7x3_1"), cin, 192, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch7x7x3_2"), 192, 192, (1, 7), 1, (0, 3)),
        spec(&format!("{p}.branch7x7x3_3"), 192, 192, (7, 1), 1, (3, 0)),
        spec(&format!("{p}.branch7x7x3_4"), 192, 192, (3, 3), 2, (0, 0)),
    ]
}

fn block_e(p: &str, cin: usize) -> Vec<ConvSpec> {
    vec![
        spec(&format!("{p}.branch1x1"), cin, 320, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3_1"), cin, 384, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3_2a"), 384, 384, (1, 3), 1, (0, 1)),
        spec(&format!("{p}.branch3x3_2b"), 384, 384, (3, 1), 1, (1, 0)),
        spec(&format!("{p}.branch3x3dbl_1"), cin, 448, (1, 1), 1, (0, 0)),
        spec(&format!("{p}.branch3x3dbl_2"), 448, 384, (3, 3), 1, (1, 1)),
        spec(&format!("{p}.branch3x3dbl_3a"), 384, 384, (1, 3), 1, (0, 1)),
        spec(&format!("{p}.branch3x3dbl_3b"), 384, 384, (3, 1), 1, (1, 0)),
        spec(&format!("{p}.branch_pool"), cin, 192, (1, 1), 1, (0, 0)),
    ]
}

fn architecture() -> Vec<ConvSpec> {
    let mut s = vec![
        spec("Conv2d_1a_3x3", 3, 32, (3, 3), 2, (0, 0)),
        spec("Conv2d_2a_3x3", 32, 32, (3, 3), 1, (0, 0)),
        spec("Conv2d_2b_3x3", 32, 64, (3, 3), 1, (1, 1)),
        spec("Conv2d_3b_1x1", 64, 80, (1, 1), 1, (0, 0)),
        spec("Conv2d_4a_3x3", 80, 192, (3, 3), 1, (0, 0)),
    ];
    s.extend(block_a("Mixed_5b", 192, 32));
    s.extend(block_a("Mixed_5c", 256, 64));
    s.extend(block_a("Mixed_5d", 288, 64));
    s.extend(block_b("Mixed_6a", 288));
    s.extend(block_c("Mixed_6b", 768, 128));
    s.extend(block_c("Mixed_6c", 768, 160));
    s.extend(block_c("Mixed_6d", 768, 160));
    s.extend(block_c("Mixed_6e", 768, 192));
    s.extend(block_d("Mixed_7a", 768));
    s.extend(block_e("Mixed_7b", 1280));
    s.extend(block_e("Mixed_7c", 2048));
    s
}

/// 3×3 stride-1 average pool that divides by the number of in-bounds cells.
fn avg_pool_exclusive(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let sum = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?.avg_pool2d_with_stride(3, 1)?;
    let ones = Tensor::ones((1, 1, h, w), x.dtype(), x.device())?;
    let count = ones.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?.avg_pool2d_with_stride(3, 1)?;
    Ok(sum.broadcast_div(&count)?)
}

/// 3×3 stride-1 max pool with one cell of padding.
// Inputs are post-ReLU, so zero padding never wins over an in-bounds cell.
fn max_pool_same(x: &Tensor) -> Result<Tensor> {
    Ok(x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?.max_pool2d_with_stride(3, 1)?)
}

/// Inception-v3 truncated at the 2048-d global average pool, in the
/// variant used by the reference FID implementation.
#[derive(Debug, Clone)]
pub struct InceptionV3 {
    convs: HashMap<String, Conv>,
    device: Device,
}

impl InceptionV3 {
    /// Builds from raw tensors named `<unit>.conv.weight` and
    /// `<unit>.bn.{weight,bias,running_mean,running_var}`; other entries are
    /// ignored.
    pub fn from_tensors(tensors: HashMap<String, Tensor>, device: &Device) -> Result<Self> {
        let get = |name: String, shape: &[usize]| -> Result<Tensor> {
            let t = tensors
                .get(&name)
                .ok_or_else(|| Error::Checkpoint {
                    path: "inception".into(),
                    reason: format!("missing tensor {name}"),
                })?;
            if t.dims() != shape {
                return Err(Error::Checkpoint {
                    path: "inception".into(),
                    reason: format!("{name} has shape {:?}, expected {shape:?}", t.dims()),
                });
            }
            Ok(t.to_dtype(DType::F32)?.to_device(device)?)
        };
        let mut convs = HashMap::new();
        for (name, cin, cout, (kh, kw), stride, pad) in architecture() {
            let w = get(format!("{name}.conv.weight"), &[cout, cin, kh, kw])?;
            let gamma = get(format!("{name}.bn.weight"), &[cout])?;
            let beta = get(format!("{name}.bn.bias"), &[cout])?;
            let mean = get(format!("{name}.bn.running_mean"), &[cout])?;
            let var = get(format!("{name}.bn.running_var"), &[cout])?;
            let scale = gamma.div(&(var + BN_EPS)?.sqrt()?)?;
            let weight = w.broadcast_mul(&scale.reshape((cout, 1, 1, 1))?)?;
            let bias = (beta - mean.mul(&scale)?)?;
            convs.insert(name, Conv { weight, bias, stride, pad });
        }
        Ok(Self {
            convs,
            device: device.clone(),
        })
    }

    /// Loads a PyTorch `.pth` or a `.safetensors` file.
    pub fn load(path: &Path) -> Result<Self> {
        let device = Device::Cpu;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let tensors: HashMap<String, Tensor> = if ext == "safetensors" {
            candle_core::safetensors::load(path, &device)?
        } else {
            candle_core::pickle::read_all(path)
                .map_err(|e| Error::Checkpoint {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?
                .into_iter()
                .collect()
        };
        Self::from_tensors(tensors, &device)
    }

    /// He-initialized weights with identity batch norm; for tests and
    /// timing only.
    pub fn random(seed: u64) -> Result<Self> {
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = HashMap::new();
        for (name, cin, cout, (kh, kw), _, _) in architecture() {
            let fan_in = (cin * kh * kw) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let w: Vec<f32> = (0..cout * cin * kh * kw).map(|_| normal.sample(&mut rng) as f32).collect();
            tensors.insert(format!("{name}.conv.weight"), Tensor::from_vec(w, (cout, cin, kh, kw), &device)?);
            tensors.insert(format!("{name}.bn.weight"), Tensor::ones(cout, DType::F32, &device)?);
            tensors.insert(format!("{name}.bn.bias"), Tensor::zeros(cout, DType::F32, &device)?);
            tensors.insert(format!("{name}.bn.running_mean"), Tensor::zeros(cout, DType::F32, &device)?);
            tensors.insert(format!("{name}.bn.running_var"), Tensor::ones(cout, DType::F32, &device)?);
        }
        Self::from_tensors(tensors, &device)
    }

    fn conv(&self, name: &str, x: &Tensor) -> Result<Tensor> {
        self.convs[name].forward(x)
    }

    fn chain(&self, names: &[String], x: &Tensor) -> Result<Tensor> {
        names.iter().try_fold(x.clone(), |h, n| self.conv(n, &h))
    }

    fn a(&self, p: &str, x: &Tensor) -> Result<Tensor> {
        let n = |s: &str| format!("{p}.{s}");
        let b1 = self.conv(&n("branch1x1"), x)?;
        let b5 = self.chain(&[n("branch5x5_1"), n("branch5x5_2")], x)?;
        let b3 = self.chain(&[n("branch3x3dbl_1"), n("branch3x3dbl_2"), n("branch3x3dbl_3")], x)?;
        let bp = self.conv(&n("branch_pool"), &avg_pool_exclusive(x)?)?;
        Ok(Tensor::cat(&[b1, b5, b3, bp], 1)?)
    }

    fn b(&self, p: &str, x: &Tensor) -> Result<Tensor> {
        let n = |s: &str| format!("{p}.{s}");
        let b3 = self.conv(&n("branch3x3"), x)?;
        let bd = self.chain(&[n("branch3x3dbl_1"), n("branch3x3dbl_2"), n("branch3x3dbl_3")], x)?;
        let bp = x.max_pool2d_with_stride(3, 2)?;
        Ok(Tensor::cat(&[b3, bd, bp], 1)?)
    }

    fn c(&self, p: &str, x: &Tensor) -> Result<Tensor> {
        let n = |s: &str| format!("{p}.{s}");
        let b1 = self.conv(&n("branch1x1"), x)?;
        let b7 = self.chain(&[n("branch7x7_1"), n("branch7x7_2"), n("branch7x7_3")], x)?;
        let bd = self.chain(
            &[
                n("branch7x7dbl_1"),
                n("branch7x7dbl_2"),
                n("branch7x7dbl_3"),
                n("branch7x7dbl_4"),
                n("branch7x7dbl_5"),
            ],
            x,
        )?;
        let bp = self.conv(&n("branch_pool"), &avg_pool_exclusive(x)?)?;
        Ok(Tensor::cat(&[b1, b7, bd, bp], 1)?)
    }

    fn d(&self, p: &str, x: &Tensor) -> Result<Tensor> {
        let n = |s: &str| format!("{p}.{s}");
        let b3 = self.chain(&[n("branch3x3_1"), n("branch3x3_2")], x)?;
        let b7 = self.chain(
            &[n("branch7x7x3_1"), n("branch7x7x3_2"), n("branch7x7x3_3"), n("branch7x7x3_4")],
            x,
        )?;
        let bp = x.max_pool2d_with_stride(3, 2)?;
        Ok(Tensor::cat(&[b3, b7, bp], 1)?)
    }

    fn e(&self, p: &str, x: &Tensor, max_pool: bool) -> Result<Tensor> {
        let n = |s: &str| format!("{p}.{s}");
        let b1 = self.conv(&n("branch1x1"), x)?;
        let h3 = self.conv(&n("branch3x3_1"), x)?;
        let b3 = Tensor::cat(&[self.conv(&n("branch3x3_2a"), &h3)?, self.conv(&n("branch3x3_2b"), &h3)?], 1)?;
        let hd = self.chain(&[n("branch3x3dbl_1"), n("branch3x3dbl_2")], x)?;
        let bd = Tensor::cat(&[self.conv(&n("branch3x3dbl_3a"), &hd)?, self.conv(&n("branch3x3dbl_3b"), &hd)?], 1)?;
        let pooled = if max_pool { max_pool_same(x)? } else { avg_pool_exclusive(x)? };
        let bp = self.conv(&n("branch_pool"), &pooled)?;
        Ok(Tensor::cat(&[b1, b3, bd, bp], 1)?)
    }

    /// Maps `(N, 3, H, W)` pixels in [-1, 1] to `(N, 2048)` features.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.to_dtype(DType::F32)?.to_device(&self.device)?;
        let x = x.upsample_bilinear2d(INCEPTION_INPUT, INCEPTION_INPUT, false)?;
        let mut h = self.chain(
            &["Conv2d_1a_3x3".into(), "Conv2d_2a_3x3".into(), "Conv2d_2b_3x3".into()],
            &x,
        )?;
        h = h.max_pool2d_with_stride(3, 2)?;
        h = self.chain(&["Conv2d_3b_1x1".into(), "Conv2d_4a_3x3".into()], &h)?;
        h = h.max_pool2d_with_stride(3, 2)?;
        for p in ["Mixed_5b", "Mixed_5c", "Mixed_5d"] {
            h = self.a(p, &h)?;
        }
        h = self.b("Mixed_6a", &h)?;
        for p in ["Mixed_6b", "Mixed_6c", "Mixed_6d", "Mixed_6e"] {
            h = self.c(p, &h)?;
        }
        h = self.d("Mixed_7a", &h)?;
        h = self.e("Mixed_7b", &h, false)?;
        h = self.e("Mixed_7c", &h, true)?;
        Ok(h.mean(D::Minus1)?.mean(D::Minus1)?)
    }
}

impl FeatureExtractor for InceptionV3 {
    fn id(&self) -> ExtractorId {
        ExtractorId::InceptionV3Pool3
    }

    fn dim(&self) -> usize {
        INCEPTION_DIM
    }

    fn features(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(batch.tensor())?.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusive_average_pool_counts_edges() {
        let x = Tensor::ones((1, 1, 3, 3), DType::F32, &Device::Cpu).unwrap();
        let y = avg_pool_exclusive(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-6), "{y:?}");
    }

    #[test]
    fn unit_count_matches_backbone() {
        assert_eq!(architecture().len(), 94);
        let names: std::collections::HashSet<_> = architecture().into_iter().map(|s| s.0).collect();
        assert_eq!(names.len(), 94);
    }

    #[test]
    fn random_backbone_produces_2048_features() {
        let net = InceptionV3::random(0).unwrap();
        let x = Tensor::zeros((1, 3, 32, 32), DType::F32, &Device::Cpu).unwrap();
        let f = net.forward(&x).unwrap();
        assert_eq!(f.dims(), &[1, INCEPTION_DIM]);
        let again = net.forward(&x).unwrap();
        let diff = (f - again).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn missing_tensor_is_checkpoint_error() {
        let err = InceptionV3::from_tensors(HashMap::new(), &Device::Cpu).unwrap_err();
        assert!(err.to_string().contains("Conv2d_1a_3x3.conv.weight"), "{err}");
    }
}

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Zero-mean Gaussian weights; `std == 0` yields zeros.
pub(crate) fn normal_var<R: Rng + ?Sized>(
    shape: &[usize],
    std: f64,
    rng: &mut R,
    dtype: DType,
    device: &Device,
) -> Result<Var> {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = if std > 0.0 {
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        (0..n).map(|_| dist.sample(rng)).collect()
    } else {
        vec![0.0; n]
    };
    let t = Tensor::from_vec(values, shape, device)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

pub(crate) fn const_var(shape: &[usize], value: f64, dtype: DType, device: &Device) -> Result<Var> {
    let t = (Tensor::ones(shape, dtype, device)? * value)?;
    Ok(Var::from_tensor(&t)?)
}

fn reflect_indices(n: usize, pad: usize, device: &Device) -> Result<Tensor> {
    let n = n as i64;
    let idx: Vec<u32> = (-(pad as i64)..n + pad as i64)
        .map(|i| {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            j as u32
        })
        .collect();
    Ok(Tensor::new(idx, device)?)
}

/// Mirror padding of the two trailing spatial dimensions (edge not repeated).
pub fn reflect_pad(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let (_, _, h, w) = x.dims4()?;
    if pad >= h || pad >= w {
        return Err(Error::Shape(format!(
            "reflection pad {pad} needs spatial size > {pad}, got {h}x{w}"
        )));
    }
    let rows = reflect_indices(h, pad, x.device())?;
    let cols = reflect_indices(w, pad, x.device())?;
    Ok(x.index_select(&rows, 2)?.index_select(&cols, 3)?)
}

/// Per-sample, per-channel normalization over the spatial dimensions, with
/// a learned per-channel scale and shift.
pub fn instance_norm(x: &Tensor, scale: &Tensor, shift: &Tensor, eps: f64) -> Result<Tensor> {
    let (_, c, _, _) = x.dims4()?;
    let flat = x.flatten_from(2)?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?.reshape(x.shape())?;
    let scale = scale.reshape((1, c, 1, 1))?;
    let shift = shift.reshape((1, c, 1, 1))?;
    Ok(normed.broadcast_mul(&scale)?.broadcast_add(&shift)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Keeps every `stride`-th position of `dim`, starting at 0.
fn subsample(x: &Tensor, dim: usize, stride: usize, count: usize) -> Result<Tensor> {
    if stride == 1 {
        return Ok(x.narrow(dim, 0, count)?);
    }
    let mut dims = x.dims().to_vec();
    let have = dims[dim];
    let x = if have < count * stride {
        x.pad_with_zeros(dim, 0, count * stride - have)?
    } else {
        x.narrow(dim, 0, count * stride)?
    };
    dims[dim] = count;
    let mut split = dims.clone();
    split.insert(dim + 1, stride);
    Ok(x.reshape(split)?.narrow(dim + 1, 0, 1)?.reshape(dims)?)
}

/// Cross-correlation of `(N, C, H, W)` with `(O, C, kh, kw)`, zero padding
/// `pad` on every side.
pub fn conv2d(x: &Tensor, w: &Tensor, pad: usize, stride: usize) -> Result<Tensor> {
    conv2d_padded(x, w, (pad, pad, pad, pad), stride)
}

/// [`conv2d`] with explicit `(top, bottom, left, right)` zero padding.
pub(crate) fn conv2d_padded(x: &Tensor, w: &Tensor, pad: (usize, usize, usize, usize), stride: usize) -> Result<Tensor> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, ci, kh, kw) = w.dims4()?;
    if c != ci {
        return Err(Error::Shape(format!("conv input has {c} channels, kernel expects {ci}")));
    }
    let (hp, wp) = (h + pad.0 + pad.1, wd + pad.2 + pad.3);
    if hp < kh || wp < kw || stride == 0 {
        return Err(Error::Shape(format!(
            "conv kernel {kh}x{kw} does not fit padded input {hp}x{wp}"
        )));
    }
    let (ho, wo) = ((hp - kh) / stride + 1, (wp - kw) / stride + 1);
    let mut x = x.clone();
    if pad.0 + pad.1 > 0 {
        x = x.pad_with_zeros(2, pad.0, pad.1)?;
    }
    if pad.2 + pad.3 > 0 {
        x = x.pad_with_zeros(3, pad.2, pad.3)?;
    }
    let mut taps = Vec::with_capacity(kh * kw);
    for i in 0..kh {
        let rows = subsample(&x.narrow(2, i, hp - i)?, 2, stride, ho)?;
        for j in 0..kw {
            taps.push(subsample(&rows.narrow(3, j, wp - j)?, 3, stride, wo)?);
        }
    }
    let cols = Tensor::stack(&taps, 2)?.reshape((n, c * kh * kw, ho * wo))?;
    let y = w.reshape((1, o, c * kh * kw))?.broadcast_matmul(&cols)?;
    Ok(y.reshape((n, o, ho, wo))?)
}

/// Inserts `stride − 1` zeros between neighbours along `dim`.
fn dilate(x: &Tensor, dim: usize, stride: usize) -> Result<Tensor> {
    if stride == 1 {
        return Ok(x.clone());
    }
    let mut dims = x.dims().to_vec();
    let len = dims[dim];
    let spread = x.unsqueeze(dim + 1)?.pad_with_zeros(dim + 1, 0, stride - 1)?;
    dims[dim] = len * stride;
    Ok(spread.reshape(dims)?.narrow(dim, 0, (len - 1) * stride + 1)?)
}

/// Transposed convolution with kernel `(C, O, k, k)`, matching the usual
/// `padding` / `output_padding` / `stride` semantics.
pub fn conv_transpose2d(x: &Tensor, w: &Tensor, pad: usize, out_pad: usize, stride: usize) -> Result<Tensor> {
    let (_, _, kh, kw) = w.dims4()?;
    if pad >= kh || pad >= kw || out_pad >= stride.max(1) {
        return Err(Error::Shape(format!(
            "transposed conv needs pad < kernel and output_padding < stride, got {pad}/{out_pad}/{stride}"
        )));
    }
    let x = dilate(&dilate(x, 2, stride)?, 3, stride)?;
    let dev = w.device();
    let rev = |k: usize| Tensor::new((0..k as u32).rev().collect::<Vec<_>>(), dev);
    let flipped = w.index_select(&rev(kh)?, 2)?.index_select(&rev(kw)?, 3)?.transpose(0, 1)?.contiguous()?;
    let (ph, pw) = (kh - 1 - pad, kw - 1 - pad);
    conv2d_padded(&x, &flipped, (ph, ph + out_pad, pw, pw + out_pad), 1)
}

/// Adds a per-channel bias to a `(N, C, H, W)` activation.
pub(crate) fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = bias.elem_count();
    Ok(x.broadcast_add(&bias.reshape((1, c, 1, 1))?)?)
}

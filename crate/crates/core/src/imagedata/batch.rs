use candle_core::{DType, Device, Tensor};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::pixels::{chw_to_image, image_to_chw};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Cartoon,
    Real,
    Generated,
}

/// A `(m, 3, H, W)` batch of pixels in [-1, 1].
#[derive(Debug, Clone)]
pub struct ImageBatch {
    data: Tensor,
    domain: DomainTag,
}

impl ImageBatch {
    /// Wraps a tensor after checking the rank, channel count and value range.
    pub fn new(data: Tensor, domain: DomainTag) -> Result<Self> {
        let (m, c, _, _) = data
            .dims4()
            .map_err(|_| Error::Shape(format!("image batch must be rank 4, got {:?}", data.dims())))?;
        if m == 0 {
            return Err(Error::Shape("image batch must hold at least one image".into()));
        }
        if c != 3 {
            return Err(Error::Shape(format!("image batch must have 3 channels, got {c}")));
        }
        let lo = data.min_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let hi = data.max_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !(lo >= -1.0 && hi <= 1.0) {
            return Err(Error::Shape(format!(
                "image batch values must lie in [-1, 1], got [{lo}, {hi}]"
            )));
        }
        Ok(Self { data, domain })
    }

    /// Stacks same-sized 8-bit images into a normalized f32 batch.
    pub fn from_images(images: &[RgbImage], domain: DomainTag, device: &Device) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("cannot build a batch from zero images".into()))?;
        let (w, h) = first.dimensions();
        let mut buf = Vec::with_capacity(images.len() * 3 * (w * h) as usize);
        for img in images {
            if img.dimensions() != (w, h) {
                return Err(Error::Shape(format!(
                    "mixed image sizes in one batch: {:?} vs {:?}",
                    img.dimensions(),
                    (w, h)
                )));
            }
            buf.extend(image_to_chw(img));
        }
        let data = Tensor::from_vec(buf, (images.len(), 3, h as usize, w as usize), device)?;
        Ok(Self { data, domain })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.data.dims()[2]
    }

    pub fn width(&self) -> usize {
        self.data.dims()[3]
    }

    /// First `n` images of the batch.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Ok(Self {
            data: self.data.narrow(0, 0, n)?,
            domain: self.domain,
        })
    }

    /// Converts every image back to 8-bit RGB.
    pub fn to_images(&self) -> Result<Vec<RgbImage>> {
        let (m, _, h, w) = self.data.dims4()?;
        let flat = self.data.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let per = 3 * h * w;
        Ok((0..m)
            .map(|i| chw_to_image(&flat[i * per..(i + 1) * per], h as u32, w as u32))
            .collect())
    }
}

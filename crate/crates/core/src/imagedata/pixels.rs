use image::{imageops::FilterType, Rgb32FImage, RgbImage};

/// ITU-R BT.601 luma weights.
const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Affine map from [0, 1] to [-1, 1].
#[inline]
pub fn unit_to_signed(x: f32) -> f32 {
    2.0 * x - 1.0
}

/// Maps an 8-bit channel value to [-1, 1].
#[inline]
pub fn normalize(value: u8) -> f32 {
    unit_to_signed(value as f32 / 255.0)
}

/// Inverse of [`normalize`], saturating values outside [-1, 1].
#[inline]
pub fn denormalize(value: f32) -> u8 {
    (((value + 1.0) * 0.5) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Luminance of one RGB pixel with channels in [0, 1].
#[inline]
pub fn luminance(rgb: [f32; 3]) -> f64 {
    LUMA_WEIGHTS
        .iter()
        .zip(rgb)
        .map(|(w, c)| w * c as f64)
        .sum()
}

/// Mean per-pixel luminance of a frame, in [0, 1].
pub fn mean_luminance(frame: &Rgb32FImage) -> f64 {
    let n = (frame.width() as usize) * (frame.height() as usize);
    if n == 0 {
        return 0.0;
    }
    let total: f64 = frame.pixels().map(|p| luminance(p.0)).sum();
    (total / n as f64).clamp(0.0, 1.0)
}

/// Returns `(accepted, mean_luminance)`; a frame is kept iff its mean
/// luminance reaches `threshold`.
pub fn dark_frame_filter(frame: &Rgb32FImage, threshold: f64) -> (bool, f64) {
    let lum = mean_luminance(frame);
    (lum >= threshold, lum)
}

/// Shorter-side resize to `size`, then center crop to `size × size`.
pub fn resize_and_crop(img: &RgbImage, size: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    if w == size && h == size {
        return img.clone();
    }
    let short = w.min(h).max(1);
    let scale = size as f64 / short as f64;
    let nw = ((w as f64 * scale).round() as u32).max(size);
    let nh = ((h as f64 * scale).round() as u32).max(size);
    let resized = image::imageops::resize(img, nw, nh, FilterType::Triangle);
    let x = (nw - size) / 2;
    let y = (nh - size) / 2;
    image::imageops::crop_imm(&resized, x, y, size, size).to_image()
}

/// Channel-major normalized pixels of an 8-bit image (length 3·H·W).
pub fn image_to_chw(img: &RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = normalize(p.0[c]);
        }
    }
    out
}

/// Inverse of [`image_to_chw`].
pub fn chw_to_image(data: &[f32], height: u32, width: u32) -> RgbImage {
    let plane = (height * width) as usize;
    assert_eq!(data.len(), 3 * plane, "chw buffer does not match {height}x{width}");
    RgbImage::from_fn(width, height, |x, y| {
        let i = (y * width + x) as usize;
        image::Rgb([
            denormalize(data[i]),
            denormalize(data[plane + i]),
            denormalize(data[2 * plane + i]),
        ])
    })
}

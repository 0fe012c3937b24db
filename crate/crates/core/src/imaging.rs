//! Conversions between rasters and `candle` tensors.

use candle_core::{Device, Tensor};
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mapkit::OneHotTensor;
use crate::synthnet::nn::to_f32_vec;

/// `3×H×W` tensor with samples mapped from `[0,255]` to `[-1,1]`.
pub fn image_to_tensor(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * w * h];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = p[c] as f32 / 127.5 - 1.0;
        }
    }
    Ok(Tensor::from_vec(data, (3, h, w), &Device::Cpu)?)
}

/// Maps one output value from `[-1,1]` to an 8-bit sample: `-1 → 0`, `+1 → 255`.
pub fn to_pixel(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Inverse of [`image_to_tensor`] for a `3×H×W` tensor (values clamped).
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t
        .dims3()
        .map_err(|_| Error::invalid(format!("expected 3×H×W, got {:?}", t.dims())))?;
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {c}")));
    }
    let data = to_f32_vec(t)?;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([
            to_pixel(data[i]),
            to_pixel(data[h * w + i]),
            to_pixel(data[2 * h * w + i]),
        ])
    }))
}

pub fn one_hot_to_tensor(t: &OneHotTensor) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        t.data.clone(),
        (t.channels, t.height, t.width),
        &Device::Cpu,
    )?)
}

/// Stacks `C×H×W` tensors into a batch.
pub fn stack(items: &[Tensor]) -> Result<Tensor> {
    if items.is_empty() {
        return Err(Error::invalid("cannot batch zero items"));
    }
    Ok(Tensor::stack(items, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_mapping() {
        assert_eq!(to_pixel(-1.0), 0);
        assert_eq!(to_pixel(1.0), 255);
        assert_eq!(to_pixel(7.0), 255);
    }

    #[test]
    fn image_tensor_roundtrip() {
        let img = RgbImage::from_fn(5, 3, |x, y| Rgb([x as u8 * 50, y as u8 * 80, 255]));
        let t = image_to_tensor(&img).unwrap();
        assert_eq!(t.dims(), &[3, 3, 5]);
        assert_eq!(tensor_to_image(&t).unwrap(), img);
    }
}

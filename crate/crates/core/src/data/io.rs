//! PNG codec and the `[0, 255] <-> [-1, 1]` pixel mapping.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::ImageBatch;

/// `v / 127.5 − 1`.
pub fn to_signed(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`to_signed`], rounding to the nearest level and clamping.
pub fn to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn image_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = img.dimensions();
    Tensor::from_fn([1, 3, h as usize, w as usize], |[_, c, y, x]| {
        to_signed(img.get_pixel(x as u32, y as u32)[c])
    })
}

/// Item `i` of a batch as an 8-bit RGB image.
pub fn tensor_to_image(t: &Tensor<f32>, i: usize) -> RgbImage {
    let [_, c, h, w] = t.shape();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| to_u8(t.get([i, ch.min(c - 1), y as usize, x as usize]));
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBatch> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::Image {
        path: None,
        message: e.to_string(),
    })?;
    ImageBatch::new(image_to_tensor(&img.to_rgb8()))
}

/// Encodes item `i` as PNG. Output bytes depend only on the pixel values.
pub fn encode_png(batch: &ImageBatch, i: usize) -> Result<Vec<u8>> {
    let img = DynamicImage::ImageRgb8(tensor_to_image(batch.tensor(), i));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Image {
        path: None,
        message: e.to_string(),
    })?;
    Ok(out.into_inner())
}

pub fn read_png(path: &Path) -> Result<ImageBatch> {
    let bytes = std::fs::read(path)?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Image { message, .. } => Error::Image {
            path: Some(path.to_path_buf()),
            message,
        },
        other => other,
    })
}

pub fn write_png(path: &Path, batch: &ImageBatch, i: usize) -> Result<()> {
    std::fs::write(path, encode_png(batch, i)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_level_round_trips() {
        for v in 0..=255u8 {
            assert_eq!(to_u8(to_signed(v)), v);
        }
        assert_eq!(to_signed(0), -1.0);
        assert_eq!(to_signed(255), 1.0);
    }

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let t = Tensor::from_fn([1, 3, 16, 16], |[_, c, y, x]| to_signed(((c * 50 + y * 16 + x) % 256) as u8));
        let b = ImageBatch::new(t).unwrap();
        let bytes = encode_png(&b, 0).unwrap();
        assert_eq!(decode_png(&bytes).unwrap(), b);
        assert_eq!(encode_png(&b, 0).unwrap(), bytes);
    }

    #[test]
    fn garbage_is_an_image_error() {
        assert!(matches!(decode_png(b"not a png"), Err(Error::Image { .. })));
    }
}

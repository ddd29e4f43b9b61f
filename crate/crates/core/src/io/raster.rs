use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Result, StereoError};
use crate::grid::{Mask, ScalarField};
use crate::image::Image;

/// Reads an 8-bit PGM (P2/P5) or PNG (gray or RGB; alpha is dropped) with
/// values scaled to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    decode_image(&bytes, path)
}

pub fn decode_image(bytes: &[u8], path: &Path) -> Result<Image> {
    let dynimg = ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let (channels, raw): (usize, Vec<u8>) = match dynimg {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, dynimg.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, dynimg.to_rgb8().into_raw()),
        other => {
            return Err(StereoError::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!(
                    "unsupported pixel format {:?}; only 8-bit gray or RGB is accepted",
                    other.color()
                ),
            })
        }
    };
    Image::new(w, h, channels, raw.into_iter().map(|v| v as f64 / 255.0).collect())
}

/// Binary mask: any pixel brighter than mid-gray is set.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = read_image(path)?;
    Ok(img.luminance().map(|&v| v > 0.5))
}

fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

fn encode_png(w: usize, h: usize, data: &[u8], color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(data, w as u32, h as u32, color)
        .expect("in-memory PNG encoding cannot fail for consistent dimensions");
    out
}

/// Gray PNG of a field in `[0, 1]` (clamped; NaN renders black).
pub fn encode_gray_png(field: &ScalarField) -> Vec<u8> {
    let data: Vec<u8> = field.iter().map(|&v| to_u8(v)).collect();
    encode_png(field.width(), field.height(), &data, ExtendedColorType::L8)
}

pub fn encode_mask_png(mask: &Mask) -> Vec<u8> {
    let data: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_png(mask.width(), mask.height(), &data, ExtendedColorType::L8)
}

/// Interleaved 8-bit RGB.
pub fn encode_rgb_png(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    encode_png(width, height, rgb, ExtendedColorType::Rgb8)
}

pub fn write_gray_png(field: &ScalarField, path: &Path) -> Result<()> {
    super::atomic_write_bytes(path, &encode_gray_png(field))
}

pub fn write_mask_png(mask: &Mask, path: &Path) -> Result<()> {
    super::atomic_write_bytes(path, &encode_mask_png(mask))
}

pub fn write_rgb_png(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<()> {
    super::atomic_write_bytes(path, &encode_rgb_png(width, height, rgb))
}

/// Disparity scaled by `255 / d_max` for viewing; returns the field in
/// `[0, 1]` ready for [`encode_gray_png`].
pub fn scaled_disparity_png(disparity: &ScalarField, d_max: usize) -> ScalarField {
    disparity.map(|&d| d / d_max as f64)
}

/// Luminance of `image` with the zero crossing of `phi` in red and the
/// predicted occlusions tinted blue.
pub fn boundary_overlay(image: &Image, phi: &ScalarField, occlusion: &Mask) -> Vec<u8> {
    let lum = image.luminance();
    let (w, h) = (lum.width(), lum.height());
    let mut rgb = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let inside = phi[(x, y)] > 0.0;
            let edge = inside
                && [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|&(dx, dy)| *phi.get_clamped(x as isize + dx, y as isize + dy) <= 0.0);
            let g = to_u8(lum[(x, y)]);
            let px = if edge {
                [255, 0, 0]
            } else if occlusion[(x, y)] {
                [g / 2, g / 2, 128 + g / 2]
            } else {
                [g, g, g]
            };
            rgb.extend_from_slice(&px);
        }
    }
    rgb
}

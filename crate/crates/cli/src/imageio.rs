//! PNG/JPEG I/O and reference preprocessing.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, RgbImage};
use srqr_core::RasterImage;

use crate::CliError;

pub fn load_rgb(path: &Path) -> Result<RasterImage, CliError> {
    let img = image::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(from_rgb8(&img.to_rgb8()))
}

fn from_rgb8(img: &RgbImage) -> RasterImage {
    RasterImage::from_u8(img.height() as usize, img.width() as usize, 3, img.as_raw())
        .expect("rgb8 buffer has h*w*3 bytes")
}

/// Writes an 8-bit PNG; gray rasters stay single-channel.
pub fn save_png(img: &RasterImage, path: &Path) -> Result<(), CliError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.to_u8();
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("gray buffer")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("rgb buffer")),
    };
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Bilinear resize so the shorter side equals `side`, then center crop to
/// `side × side`.
pub fn fit_square(img: &RasterImage, side: usize) -> RasterImage {
    let rgb = img.to_rgb();
    let (h, w) = (rgb.height(), rgb.width());
    if h == side && w == side {
        return rgb;
    }
    let buf = RgbImage::from_raw(w as u32, h as u32, rgb.to_u8()).expect("rgb buffer");
    let scale = side as f64 / h.min(w) as f64;
    let nw = ((w as f64 * scale).round() as u32).max(side as u32);
    let nh = ((h as f64 * scale).round() as u32).max(side as u32);
    let resized = imageops::resize(&buf, nw, nh, FilterType::Triangle);
    let x = (nw - side as u32) / 2;
    let y = (nh - side as u32) / 2;
    let cropped = imageops::crop_imm(&resized, x, y, side as u32, side as u32).to_image();
    from_rgb8(&cropped)
}

//! Grayscale image files: 8-bit PNG and binary PGM (P5).
//!
//! Pixels are quantized as `round(v * 255)`. Reading converts to `[0, 1]`
//! and composites any alpha channel over white.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, ImageFormat};
use wireforge_core::RasterImage;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Decode(String),
    #[error("{0}")]
    Encode(String),
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_gray8(image: &RasterImage) -> GrayImage {
    let bytes = image.pixels().iter().map(|&v| quantize(v)).collect();
    GrayImage::from_raw(image.width() as u32, image.height() as u32, bytes).expect("buffer matches dimensions")
}

fn encode(image: &RasterImage, format: ImageFormat) -> Result<Vec<u8>, ImageIoError> {
    let gray = to_gray8(image);
    let mut out = Vec::new();
    let (w, h) = gray.dimensions();
    let res = match format {
        ImageFormat::Pnm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(gray.as_raw(), w, h, ExtendedColorType::L8),
        _ => gray.write_to(&mut Cursor::new(&mut out), format),
    };
    res.map_err(|e| ImageIoError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>, ImageIoError> {
    encode(image, ImageFormat::Png)
}

pub fn encode_pgm(image: &RasterImage) -> Result<Vec<u8>, ImageIoError> {
    encode(image, ImageFormat::Pnm)
}

pub fn decode(bytes: &[u8]) -> Result<RasterImage, ImageIoError> {
    let img = image::load_from_memory(bytes).map_err(|e| ImageIoError::Decode(e.to_string()))?;
    let la = img.to_luma_alpha8();
    let (w, h) = la.dimensions();
    let pixels = la
        .pixels()
        .map(|p| {
            let (l, a) = (p.0[0] as f64 / 255.0, p.0[1] as f64 / 255.0);
            l * a + (1.0 - a)
        })
        .collect();
    RasterImage::from_pixels(w as usize, h as usize, pixels).map_err(|e| ImageIoError::Decode(e.to_string()))
}

pub fn read_image(path: &Path) -> Result<RasterImage, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes).map_err(|e| ImageIoError::Decode(format!("{}: {e}", path.display())))
}

/// Writes PNG or PGM depending on the extension (`.pgm` selects PGM).
pub fn write_image(image: &RasterImage, path: &Path) -> Result<(), ImageIoError> {
    let pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if pgm { encode_pgm(image)? } else { encode_png(image)? };
    std::fs::write(path, bytes).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

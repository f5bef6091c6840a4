// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! PNG encodings used on disk and on the wire.
//!
//! Score maps travel as 16-bit grayscale (`0 -> 0.0`, `65535 -> 1.0`),
//! masks are written as 1-bit grayscale.

use std::path::Path;

use thiserror::Error;

use crate::types::{ImageData, InvariantError, RasterMask, ScoreMap};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),
    #[error("png encode failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

fn encode_png(
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn encode_rgb_png(image: &ImageData) -> Result<Vec<u8>, CodecError> {
    encode_png(
        image.width(),
        image.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        image.pixels(),
    )
}

/// Decodes any supported raster format to RGB8.
pub fn decode_image(bytes: &[u8], source_id: impl Into<String>) -> Result<ImageData, CodecError> {
    let rgb = image::load_from_memory(bytes)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(ImageData::new(w, h, rgb.into_raw(), source_id)?)
}

/// Loads an image file; the source id is the file stem.
pub fn load_image(path: &Path) -> Result<ImageData, CodecError> {
    let bytes = std::fs::read(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_image(&bytes, stem)
}

pub fn save_rgb_png(image: &ImageData, path: &Path) -> Result<(), CodecError> {
    std::fs::write(path, encode_rgb_png(image)?)?;
    Ok(())
}

fn quantize(v: f32) -> u16 {
    (f64::from(v) * 65535.0).round().clamp(0.0, 65535.0) as u16
}

pub fn encode_scores_png(scores: &ScoreMap) -> Result<Vec<u8>, CodecError> {
    let data: Vec<u8> = scores
        .values()
        .iter()
        .flat_map(|&v| quantize(v).to_be_bytes())
        .collect();
    encode_png(
        scores.width(),
        scores.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Decodes a grayscale score PNG; 8-bit inputs are widened to 16 bits.
pub fn decode_scores_png(bytes: &[u8]) -> Result<ScoreMap, CodecError> {
    let luma = image::load_from_memory(bytes)?.to_luma16();
    let (w, h) = luma.dimensions();
    let values = luma
        .into_raw()
        .into_iter()
        .map(|v| f32::from(v) / 65535.0)
        .collect();
    Ok(ScoreMap::new(w, h, values)?)
}

pub fn encode_mask_png(mask: &RasterMask) -> Result<Vec<u8>, CodecError> {
    let w = mask.width() as usize;
    let stride = w.div_ceil(8);
    let mut data = vec![0u8; stride * mask.height() as usize];
    for y in 0..mask.height() as usize {
        for x in 0..w {
            if mask.bits()[y * w + x] {
                data[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode_png(
        mask.width(),
        mask.height(),
        png::ColorType::Grayscale,
        png::BitDepth::One,
        &data,
    )
}

/// Any non-zero luminance is foreground.
pub fn decode_mask_png(bytes: &[u8]) -> Result<RasterMask, CodecError> {
    let luma = image::load_from_memory(bytes)?.to_luma8();
    let (w, h) = luma.dimensions();
    Ok(RasterMask::new(
        w,
        h,
        luma.into_raw().into_iter().map(|v| v > 0).collect(),
    )?)
}

pub fn load_mask(path: &Path) -> Result<RasterMask, CodecError> {
    decode_mask_png(&std::fs::read(path)?)
}

pub fn save_mask_png(mask: &RasterMask, path: &Path) -> Result<(), CodecError> {
    std::fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_round_trip() {
        let m = RasterMask::from_fn(11, 5, |x, y| (x * 3 + y) % 4 == 0);
        assert_eq!(decode_mask_png(&encode_mask_png(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn score_png_is_16_bit() {
        let s = ScoreMap::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let back = decode_scores_png(&encode_scores_png(&s).unwrap()).unwrap();
        assert_eq!(back.values()[0], 0.0);
        assert_eq!(back.values()[2], 1.0);
        assert!((back.values()[1] - 0.5).abs() < 1.0 / 65535.0);
        let binary = ScoreMap::from_mask(&RasterMask::from_fn(4, 4, |x, _| x < 2));
        assert_eq!(
            decode_scores_png(&encode_scores_png(&binary).unwrap()).unwrap(),
            binary
        );
    }

    #[test]
    fn rgb_round_trip() {
        let img = ImageData::new(2, 2, (0..12).map(|v| v * 20).collect(), "x").unwrap();
        let back = decode_image(&encode_rgb_png(&img).unwrap(), "x").unwrap();
        assert_eq!(back, img);
    }
}

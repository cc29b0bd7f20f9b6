use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with components in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| image_err(path, e))?;
    w.write_image_data(bytes).map_err(|e| image_err(path, e))?;
    w.finish().map_err(|e| image_err(path, e))
}

/// 8-bit RGB PNG; values are clamped to `[0, 1]` and rounded.
pub fn write_png_rgb(path: &Path, width: usize, height: usize, pixels: &[[f64; 3]]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::invalid("pixel count does not match image size"));
    }
    let bytes: Vec<u8> = pixels.iter().flat_map(|p| p.map(to_byte)).collect();
    write_png(path, width, height, png::ColorType::Rgb, &bytes)
}

/// 8-bit grayscale PNG scaled so the largest value maps to white.
pub fn write_png_gray(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::invalid("pixel count does not match image size"));
    }
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let bytes: Vec<u8> = values.iter().map(|v| to_byte(v * scale)).collect();
    write_png(path, width, height, png::ColorType::Grayscale, &bytes)
}

/// Raw little-endian `f64` values, row-major, no header.
pub fn write_raw_f64(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit RGB or RGBA PNG; colors are `byte / 255`.
pub fn read_png_rgb(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(image_err(path, "expected 8-bit samples"));
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(image_err(path, format!("unsupported color type {other:?}"))),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let pixels = buf[..info.buffer_size()]
        .chunks_exact(channels)
        .map(|p| [0, 1, 2].map(|c| f64::from(p[c]) / 255.0))
        .collect();
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

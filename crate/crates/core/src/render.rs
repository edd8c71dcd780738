//! Grayscale images and similarity heatmaps as PGM/PPM or PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_byte(v)).collect()
    }

    /// Writes PGM (`.pgm`) or PNG (`.png`).
    pub fn write(&self, path: &Path) -> Result<()> {
        match extension(path)?.as_str() {
            "pgm" => {
                let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
                bytes.extend(self.to_bytes());
                std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
            }
            "png" => write_png(path, self.width, self.height, png::ColorType::Grayscale, &self.to_bytes()),
            other => Err(Error::Persistence(format!("unsupported image extension '{other}'"))),
        }
    }
}

/// RGB raster, 8 bits per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Writes PPM (`.ppm`) or PNG (`.png`).
    pub fn write(&self, path: &Path) -> Result<()> {
        match extension(path)?.as_str() {
            "ppm" => {
                let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
                bytes.extend_from_slice(&self.data);
                std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
            }
            "png" => write_png(path, self.width, self.height, png::ColorType::Rgb, &self.data),
            other => Err(Error::Persistence(format!("unsupported image extension '{other}'"))),
        }
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .ok_or_else(|| Error::Persistence(format!("{} has no image extension", path.display())))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::Persistence(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(data).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(())
}

/// Diverging blue-white-red map on the fixed range `[-1, 1]`.
pub fn diverging_color(v: f64) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    let fade = to_byte(1.0 - v.abs());
    if v >= 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

/// Square heatmap of a matrix, `cell` pixels per entry.
pub fn heatmap(matrix: &[Vec<f64>], cell: usize) -> RgbImage {
    let n = matrix.len();
    let side = n * cell;
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            data.extend_from_slice(&diverging_color(matrix[y / cell][x / cell]));
        }
    }
    RgbImage { width: side, height: side, data }
}

/// Writes a text artifact.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

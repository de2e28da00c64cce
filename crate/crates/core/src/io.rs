//! Tensor file formats.
//!
//! `TF32`: magic bytes "TF32", three little-endian u32 dimensions (height,
//! width, channels), then `h*w*c` little-endian IEEE-754 f32 values in
//! row-major channel-last order. Lossless for `Tensor<f32>`.
//!
//! PNG: 8-bit RGB, values mapped linearly between [0, 1] and [0, 255]
//! (round-half-up on write, values clamped into range first).

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TF32_MAGIC: &[u8; 4] = b"TF32";

pub fn tf32_to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + t.len() * 4);
    out.extend_from_slice(TF32_MAGIC);
    out.extend_from_slice(&(t.height() as u32).to_le_bytes());
    out.extend_from_slice(&(t.width() as u32).to_le_bytes());
    out.extend_from_slice(&(t.channels() as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tf32_from_bytes(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 16 {
        return Err(Error::MalformedTensorFile("shorter than the 16-byte header".into()));
    }
    if &bytes[0..4] != TF32_MAGIC {
        return Err(Error::MalformedTensorFile("bad magic, expected \"TF32\"".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(4), dim(8), dim(12));
    let expected = 16 + h
        .checked_mul(w)
        .and_then(|hw| hw.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedTensorFile("dimension overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::MalformedTensorFile(format!(
            "payload is {} bytes, {h}x{w}x{c} needs {expected}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::from_vec(h, w, c, data)
}

pub fn write_tf32(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    Ok(std::fs::write(path, tf32_to_bytes(t))?)
}

pub fn read_tf32(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    tf32_from_bytes(&std::fs::read(path)?)
}

/// Encode a 3-channel unit-range tensor as PNG bytes.
pub fn png_bytes(t: &Tensor<f32>) -> Result<Vec<u8>> {
    if t.channels() != 3 {
        return Err(Error::ShapeMismatch {
            expected: "3-channel image".into(),
            got: format!("{} channels", t.channels()),
        });
    }
    let pixels: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect();
    let img = image::RgbImage::from_raw(t.width() as u32, t.height() as u32, pixels)
        .expect("buffer sized from tensor dims");
    let mut out = Vec::new();
    image::DynamicImage::ImageRgb8(img)
        .write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    Ok(std::fs::write(path, png_bytes(t)?)?)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Tensor::from_vec(h as usize, w as usize, 3, data)
}

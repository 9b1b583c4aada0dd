//! RGB float images with PPM (P6, 8-bit) and PFM (little-endian) IO.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Row-major RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageBuffer { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    fn check_same_size(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Per-channel `|self − other|`.
    pub fn abs_diff(&self, other: &ImageBuffer) -> Result<ImageBuffer> {
        self.check_same_size(other)?;
        Ok(ImageBuffer {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).collect(),
        })
    }
}

/// Quantizes to 8 bits with `round(255·v)`.
pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Splits the next whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(path: &Path, bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(path, 0, format!("byte offset {start}: truncated header")));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::parse(path, 0, format!("byte offset {start}: bad header")))
}

fn header_usize(path: &Path, bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let at = *pos;
    let tok = header_token(path, bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::parse(path, 0, format!("byte offset {at}: expected an integer, got {tok:?}")))
}

pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0;
    if header_token(path, bytes, &mut pos)? != "P6" {
        return Err(Error::parse(path, 0, "not a binary PPM (P6)"));
    }
    let width = header_usize(path, bytes, &mut pos)?;
    let height = header_usize(path, bytes, &mut pos)?;
    let maxval = header_usize(path, bytes, &mut pos)?;
    if !(1..=255).contains(&maxval) {
        return Err(Error::parse(path, 0, format!("unsupported maxval {maxval}")));
    }
    pos += 1;
    let n = width * height * 3;
    if bytes.len() < pos || bytes.len() - pos != n {
        return Err(Error::parse(path, 0, format!("byte offset {pos}: expected {n} pixel bytes")));
    }
    let data = bytes[pos..].iter().map(|&b| b as f64 / maxval as f64).collect();
    Ok(ImageBuffer { width, height, data })
}

/// PFM with scale `-1` (little-endian); rows are stored bottom to top.
/// Values are rounded to `f32`.
pub fn encode_pfm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for y in (0..img.height).rev() {
        for v in &img.data[y * img.width * 3..(y + 1) * img.width * 3] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0;
    if header_token(path, bytes, &mut pos)? != "PF" {
        return Err(Error::parse(path, 0, "not a color PFM (PF)"));
    }
    let width = header_usize(path, bytes, &mut pos)?;
    let height = header_usize(path, bytes, &mut pos)?;
    let at = pos;
    let scale: f64 = header_token(path, bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::parse(path, 0, format!("byte offset {at}: bad scale")))?;
    if !(scale < 0.0) {
        return Err(Error::parse(path, 0, "only little-endian PFM (negative scale) is supported"));
    }
    pos += 1;
    let n = width * height * 3;
    if bytes.len() < pos || bytes.len() - pos != n * 4 {
        return Err(Error::parse(path, 0, format!("byte offset {pos}: expected {n} floats")));
    }
    let mut data = vec![0.0f64; n];
    for (row, y) in (0..height).rev().enumerate() {
        for i in 0..width * 3 {
            let off = pos + (row * width * 3 + i) * 4;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::parse(path, 0, format!("byte offset {off}: non-finite value")));
            }
            data[y * width * 3 + i] = (v as f64).clamp(0.0, 1.0);
        }
    }
    Ok(ImageBuffer { width, height, data })
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Writes PFM for a `.pfm` extension and PPM otherwise.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let bytes = if is_pfm(path) { encode_pfm(img) } else { encode_ppm(img) };
    write_atomic(path, &bytes)
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_pfm(path) {
        decode_pfm(path, &bytes)
    } else {
        decode_ppm(path, &bytes)
    }
}

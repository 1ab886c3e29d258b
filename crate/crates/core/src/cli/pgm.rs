//! Portable graymap (`P2` ASCII and `P5` binary) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::IoError;
use crate::grid::ScalarField;

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Header tokenizer that skips whitespace and `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

/// Decodes PGM bytes into a field with values `sample / maxval`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ScalarField, IoError> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(format_err(path, "expected magic P2 or P5")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number().ok_or_else(|| format_err(path, "bad width"))? as usize;
    let height = h.number().ok_or_else(|| format_err(path, "bad height"))? as usize;
    let maxval = h.number().ok_or_else(|| format_err(path, "bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| format_err(path, "image dimensions overflow"))?;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if !bytes.get(h.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(format_err(path, "missing whitespace after maxval"));
        }
        let raster = &bytes[h.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * count } else { count };
        if raster.len() < need {
            return Err(format_err(path, format!("raster has {} bytes, need {need}", raster.len())));
        }
        for k in 0..count {
            let sample = if wide {
                u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]) as u32
            } else {
                raster[k] as u32
            };
            if sample > maxval {
                return Err(format_err(path, format!("sample {sample} exceeds maxval {maxval}")));
            }
            data.push(sample as f64 / scale);
        }
    } else {
        for _ in 0..count {
            let sample = h.number().ok_or_else(|| format_err(path, "truncated ASCII raster"))?;
            if sample > maxval {
                return Err(format_err(path, format!("sample {sample} exceeds maxval {maxval}")));
            }
            data.push(sample as f64 / scale);
        }
    }
    ScalarField::from_vec(height, width, data).map_err(|source| IoError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads an 8- or 16-bit PGM file as a field on `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ScalarField, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&bytes, path)
}

/// `P5` bytes with maxval 255: values are clamped to `[0, 1]` and rounded
/// half up.
pub fn encode_pgm(field: &ScalarField) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.cols(), field.rows()).into_bytes();
    out.extend(field.as_slice().iter().map(|&v| quantize(v)));
    out
}

/// `floor(255 * clamp(v, 0, 1) + 0.5)`; non-finite values map to 0.
pub fn quantize(v: f64) -> u8 {
    if !v.is_finite() {
        return 0;
    }
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

pub fn save_image(field: &ScalarField, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(field)).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

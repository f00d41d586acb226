//! `AXF1` float-map container.
//!
//! | offset | size      | content                                  |
//! |--------|-----------|------------------------------------------|
//! | 0      | 4         | magic `AXF1`                             |
//! | 4      | 4         | height, `u32` little-endian              |
//! | 8      | 4         | width, `u32` little-endian               |
//! | 12     | 4         | channels, `u32` little-endian            |
//! | 16     | H·W·C·4   | `f32` little-endian, row-major, channel innermost |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub const MAGIC: &[u8; 4] = b"AXF1";
pub const HEADER_LEN: usize = 16;

pub fn encode_float_map(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + image.data.len() * 4);
    out.extend_from_slice(MAGIC);
    for dim in [image.height, image.width, image.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in &image.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_float_map(bytes: &[u8], name: &str) -> Result<Image> {
    let ferr = |offset: usize, message: String| Error::Format {
        path: name.to_string(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(ferr(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(ferr(
            0,
            format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(4), dim(8), dim(12));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| ferr(4, "dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(ferr(
            bytes.len(),
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(ferr(
            HEADER_LEN + expected,
            "trailing bytes after payload".into(),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::from_vec(h, w, c, data)
}

pub fn write_float_map(image: &Image, path: &Path) -> Result<()> {
    fs::write(path, encode_float_map(image)).map_err(|e| Error::io(path, e))
}

pub fn read_float_map(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_float_map(&bytes, &path.display().to_string())
}

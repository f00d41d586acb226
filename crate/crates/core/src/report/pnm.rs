//! Binary PGM (`P5`) and PPM (`P6`) with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes raw 8-bit samples. `channels` must be 1 (P5) or 3 (P6).
pub fn encode_pnm(height: usize, width: usize, channels: usize, samples: &[u8]) -> Result<Vec<u8>> {
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::Contract(format!(
                "PNM supports 1 or 3 channels, got {c}"
            )))
        }
    };
    if samples.len() != height * width * channels {
        return Err(Error::Contract(
            "PNM sample count does not match shape".into(),
        ));
    }
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    Ok(out)
}

pub fn write_pnm(image: &Image, path: &Path) -> Result<()> {
    let samples: Vec<u8> = image.data.iter().map(|&v| to_u8(v)).collect();
    let bytes = encode_pnm(image.height, image.width, image.channels, &samples)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_pnm(bytes: &[u8], name: &str) -> Result<Image> {
    let ferr = |offset: usize, message: &str| Error::Format {
        path: name.to_string(),
        offset: offset as u64,
        message: message.to_string(),
    };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(ferr(0, "not a binary PGM/PPM")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(ferr(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ferr(start, "expected an integer"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ferr(pos, "only 8-bit samples are supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = height * width * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| ferr(bytes.len(), "truncated raster"))?;
    let data = raster.iter().map(|&b| f32::from(b) / 255.0).collect();
    Image::from_vec(height, width, channels, data)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_on_8_bit_levels() {
        let data: Vec<f32> = (0..12).map(|i| (i * 20) as f32 / 255.0).collect();
        let img = Image::from_vec(3, 4, 1, data).unwrap();
        let samples: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
        let bytes = encode_pnm(3, 4, 1, &samples).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode_pnm(&bytes, "x").unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 51]);
        let img = decode_pnm(&bytes, "x").unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.data, vec![1.0, 0.0, 0.2]);
    }

    #[test]
    fn truncated_raster_is_an_error() {
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00\x01", "x").is_err());
        assert!(decode_pnm(b"P3\n1 1\n255\n1", "x").is_err());
    }
}

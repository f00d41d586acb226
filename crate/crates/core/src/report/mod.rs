//! Persistence and rendering of images, maps and run summaries.

mod bands;
mod floatmap;
mod pnm;
mod summary;

use std::fs;
use std::path::Path;

pub use bands::{render_decile_bands, DecileBandImage};
pub use floatmap::{decode_float_map, encode_float_map, read_float_map, write_float_map};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, to_u8, write_pnm};
pub use summary::{file_inventory, summarize_run, REQUIRED_ARTIFACTS};

use crate::error::{Error, Result};
use crate::gradcam::ExplanationMap;
use crate::image::Image;

fn extension(path: &Path) -> &str {
    path.extension().and_then(|e| e.to_str()).unwrap_or("")
}

/// Writes `.axf` float maps or 8-bit `.pgm`/`.ppm`, chosen by extension.
pub fn write_image(image: &Image, path: &Path) -> Result<()> {
    match extension(path) {
        "axf" => write_float_map(image, path),
        "pgm" | "ppm" => write_pnm(image, path),
        other => Err(Error::Config(format!(
            "unsupported image extension {other:?}"
        ))),
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path) {
        "axf" => read_float_map(path),
        "pgm" | "ppm" => read_pnm(path),
        other => Err(Error::Config(format!(
            "unsupported image extension {other:?}"
        ))),
    }
}

/// Grayscale rendering of a map scaled so its maximum is white.
pub fn render_heatmap(map: &ExplanationMap) -> Image {
    let max = map.max();
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Image {
        height: map.height,
        width: map.width,
        channels: 1,
        data: map.data.iter().map(|v| v * scale).collect(),
    }
}

/// `key=value` sidecar, one pair per line in the given order.
pub fn write_meta(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: i as u64 + 1,
                    message: "expected key=value".into(),
                })
        })
        .collect()
}

pub fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.meta");
        write_meta(&p, &[("label", "a".into()), ("n_positives", "3".into())]).unwrap();
        let m = read_meta(&p).unwrap();
        assert_eq!(meta_value(&m, "n_positives"), Some("3"));
        fs::write(&p, "oops\n").unwrap();
        assert!(matches!(read_meta(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn dispatch_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(3, 2, 1, 0.5);
        write_image(&img, &dir.path().join("a.axf")).unwrap();
        assert_eq!(read_image(&dir.path().join("a.axf")).unwrap(), img);
        write_image(&img, &dir.path().join("a.pgm")).unwrap();
        assert_eq!(
            read_image(&dir.path().join("a.pgm")).unwrap().shape(),
            (3, 2, 1)
        );
        assert!(write_image(&img, &dir.path().join("a.png")).is_err());
    }
}

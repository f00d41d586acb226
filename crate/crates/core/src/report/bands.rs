use crate::gradcam::ExplanationMap;
use crate::image::Image;
use crate::peppr::{erased_count, importance_order};

/// Importance deciles of a map as an 8-bit grayscale picture.
#[derive(Debug, Clone, PartialEq)]
pub struct DecileBandImage {
    pub height: usize,
    pub width: usize,
    /// Band index per pixel, 0 (least important) to 9.
    pub bands: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl DecileBandImage {
    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
        }
    }
}

/// Pixel of rank `r` (ascending importance) lies in band `k` when
/// `erased(k/10) ≤ r < erased((k+1)/10)`, so band `≥ k` is exactly the set
/// the quantile masks retain at `v = k/10`.
pub fn render_decile_bands(map: &ExplanationMap, background: Option<&Image>) -> DecileBandImage {
    let n = map.len();
    let order = importance_order(&map.data);
    let mut bands = vec![0u8; n];
    for k in 0..10u8 {
        let lo = erased_count(f64::from(k) / 10.0, n);
        let hi = erased_count(f64::from(k + 1) / 10.0, n);
        for &p in &order[lo..hi] {
            bands[p] = k;
        }
    }
    let lum = background.map(Image::luminance);
    let pixels = bands
        .iter()
        .enumerate()
        .map(|(p, &b)| {
            let level = f32::from(b + 1) / 10.0;
            let v = match &lum {
                Some(l) => 0.5 * level + 0.5 * l[p],
                None => level,
            };
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    DecileBandImage {
        height: map.height,
        width: map.width,
        bands,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcam::{Normalization, Provenance};

    fn map(data: Vec<f32>) -> ExplanationMap {
        ExplanationMap::new(10, 10, data, Normalization::Raw, Provenance::Overall).unwrap()
    }

    #[test]
    fn increasing_map_has_exact_deciles() {
        let b = render_decile_bands(&map((0..100).map(|i| i as f32).collect()), None);
        for k in 0..10u8 {
            assert_eq!(b.bands.iter().filter(|&&x| x == k).count(), 10);
        }
        assert_eq!(b.bands[99], 9);
        assert_eq!(b.pixels[99], 255);
        assert_eq!(b.bands[0], 0);
    }

    #[test]
    fn constant_map_still_splits_evenly() {
        let b = render_decile_bands(&map(vec![1.0; 100]), None);
        for k in 0..10u8 {
            assert_eq!(b.bands.iter().filter(|&&x| x == k).count(), 10);
        }
        assert_eq!(&b.bands[..10], &[0; 10]);
    }

    #[test]
    fn blend_with_background() {
        let bg = Image::filled(10, 10, 1, 0.0);
        let b = render_decile_bands(&map((0..100).map(|i| i as f32).collect()), Some(&bg));
        assert_eq!(b.pixels[99], 128);
    }
}

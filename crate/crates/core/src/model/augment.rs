//! RandomErasing: with probability `p`, overwrite one axis-aligned rectangle
//! with independent uniform `[0, 1)` noise.

use rand::Rng;

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasingConfig {
    pub prob: f64,
    /// Erased area as a fraction of the image.
    pub area: (f64, f64),
    /// Rectangle height / width.
    pub aspect: (f64, f64),
}

impl Default for ErasingConfig {
    fn default() -> Self {
        ErasingConfig {
            prob: 0.3,
            area: (0.05, 0.40),
            aspect: (0.3, 3.3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

const MAX_ATTEMPTS: usize = 10;

/// Applies RandomErasing in place and returns the erased rectangle, if any.
///
/// Area fraction and aspect ratio are drawn uniformly. A draw is rejected when
/// the rounded rectangle does not fit or its actual area falls outside the
/// configured range; after ten rejections the image is left untouched.
pub fn random_erasing<R: Rng + ?Sized>(
    image: &mut Image,
    rng: &mut R,
    cfg: &ErasingConfig,
) -> Option<Rect> {
    if cfg.prob <= 0.0 || !rng.random_bool(cfg.prob.min(1.0)) {
        return None;
    }
    let (h, w) = (image.height, image.width);
    let total = (h * w) as f64;
    for _ in 0..MAX_ATTEMPTS {
        let area = rng.random_range(cfg.area.0..=cfg.area.1) * total;
        let aspect = rng.random_range(cfg.aspect.0..=cfg.aspect.1);
        let eh = (area * aspect).sqrt().round() as usize;
        let ew = (area / aspect).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh >= h || ew >= w {
            continue;
        }
        let frac = (eh * ew) as f64 / total;
        if frac < cfg.area.0 || frac > cfg.area.1 {
            continue;
        }
        let top = rng.random_range(0..=h - eh);
        let left = rng.random_range(0..=w - ew);
        for r in top..top + eh {
            for c in left..left + ew {
                for ch in 0..image.channels {
                    image.set(r, c, ch, rng.random::<f32>());
                }
            }
        }
        return Some(Rect {
            top,
            left,
            height: eh,
            width: ew,
        });
    }
    None
}

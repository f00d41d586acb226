//! Gradient-weighted class activation maps at the last convolution layer.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{forward_sample, target_activation_grad, ModelParams, SampleCache, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    Raw,
    #[default]
    MaxOne,
}

impl Normalization {
    pub fn token(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::MaxOne => "max-one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Sample { sample_id: String, label: usize },
    LabelGlobal { label: usize },
    Overall,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Sample { sample_id, label } => write!(f, "sample:{sample_id}:{label}"),
            Provenance::LabelGlobal { label } => write!(f, "label:{label}"),
            Provenance::Overall => f.write_str("overall"),
        }
    }
}

/// `H×W` non-negative importance map.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub normalization: Normalization,
    pub provenance: Provenance,
}

impl ExplanationMap {
    pub fn new(
        height: usize,
        width: usize,
        data: Vec<f32>,
        normalization: Normalization,
        provenance: Provenance,
    ) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Contract(format!(
                "map data has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(format!(
                "map {provenance} has negative or non-finite values"
            )));
        }
        Ok(ExplanationMap {
            height,
            width,
            data,
            normalization,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn same_shape(&self, other: &ExplanationMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }

    pub fn from_image(image: &Image, provenance: Provenance) -> Result<Self> {
        if image.channels != 1 {
            return Err(Error::Contract(format!(
                "explanation maps have one channel, got {}",
                image.channels
            )));
        }
        ExplanationMap::new(
            image.height,
            image.width,
            image.data.clone(),
            Normalization::Raw,
            provenance,
        )
    }
}

/// Bilinear resize with the half-pixel (align-corners off) convention:
/// `src = (dst + 0.5)·(in/out) − 0.5`, clamped to the source edge.
pub fn upsample_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Result<Vec<f64>> {
    if src.len() != src_h * src_w || src_h == 0 || src_w == 0 {
        return Err(Error::Contract("bilinear source has wrong size".into()));
    }
    if src_h > dst_h || src_w > dst_w {
        return Err(Error::Contract(format!(
            "cannot upsample {src_h}x{src_w} to smaller {dst_h}x{dst_w}"
        )));
    }
    let coord = |d: usize, n_src: usize, n_dst: usize| {
        let s =
            ((d as f64 + 0.5) * (n_src as f64 / n_dst as f64) - 0.5).clamp(0.0, (n_src - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..dst_w).map(|x| coord(x, src_w, dst_w)).collect();
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        let (y0, y1, wy) = coord(y, src_h, dst_h);
        for &(x0, x1, wx) in &cols {
            // a + w(b − a) keeps constant inputs exact
            let top = src[y0 * src_w + x0] + wx * (src[y0 * src_w + x1] - src[y0 * src_w + x0]);
            let bot = src[y1 * src_w + x0] + wx * (src[y1 * src_w + x1] - src[y1 * src_w + x0]);
            out.push(top + wy * (bot - top));
        }
    }
    Ok(out)
}

/// Coarse map `ReLU(Σ_k α_k A^k)` at the resolution of the last conv layer.
pub fn coarse_cam<T: Scalar>(
    params: &ModelParams<T>,
    cache: &SampleCache<T>,
    label: usize,
) -> Result<Vec<f64>> {
    let grad = target_activation_grad(params, cache, label)?;
    let act = cache.target_activation();
    let channels = params.arch.feature_channels();
    let area = act.len() / channels;
    let mut cam = vec![0f64; area];
    for k in 0..channels {
        let g = &grad[k * area..(k + 1) * area];
        let alpha = g.iter().map(|v| v.as_f64()).sum::<f64>() / area as f64;
        for (c, a) in cam.iter_mut().zip(&act[k * area..(k + 1) * area]) {
            *c += alpha * a.as_f64();
        }
    }
    for c in &mut cam {
        // NaN passes through so the caller can report it
        if *c < 0.0 {
            *c = 0.0;
        }
    }
    Ok(cam)
}

/// GradCAM for one label from an existing forward pass of one image.
pub fn gradcam_from_cache<T: Scalar>(
    params: &ModelParams<T>,
    cache: &SampleCache<T>,
    label: usize,
    sample_id: &str,
    normalization: Normalization,
) -> Result<ExplanationMap> {
    let provenance = Provenance::Sample {
        sample_id: sample_id.to_string(),
        label,
    };
    let cam = coarse_cam(params, cache, label)?;
    if cam.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite GradCAM for sample {sample_id}, label {label}"
        )));
    }
    let (ch, cw) = params.arch.cam_size()?;
    let (h, w) = (params.arch.input_height, params.arch.input_width);
    let mut up = upsample_bilinear(&cam, ch, cw, h, w)?;
    if normalization == Normalization::MaxOne {
        let max = up.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut up {
                *v /= max;
            }
        }
    }
    let data = up.into_iter().map(|v| v as f32).collect();
    ExplanationMap::new(h, w, data, normalization, provenance)
}

/// GradCAM map `E^l_i` for `label` on `image`, upsampled to input resolution.
pub fn gradcam<T: Scalar>(
    params: &ModelParams<T>,
    image: &Image,
    label: usize,
    sample_id: &str,
    normalization: Normalization,
) -> Result<ExplanationMap> {
    let shapes = params.arch.block_shapes()?;
    if image.shape()
        != (
            params.arch.input_height,
            params.arch.input_width,
            params.arch.input_channels,
        )
    {
        return Err(Error::Contract(format!(
            "image {sample_id} has shape {:?}, model expects {}x{}x{}",
            image.shape(),
            params.arch.input_height,
            params.arch.input_width,
            params.arch.input_channels
        )));
    }
    let cache = forward_sample(params, &shapes, image, false);
    gradcam_from_cache(params, &cache, label, sample_id, normalization)
}

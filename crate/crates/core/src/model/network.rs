//! Forward and backward passes.
//!
//! Each sample is processed independently (there is no batch-coupled layer),
//! so per-sample work may run on any thread. Gradients are reduced in sample
//! order, which keeps results identical for any thread count.

use rayon::prelude::*;

use super::arch::BlockShape;
use super::params::ModelParams;
use super::scalar::{matmul, Operand, Scalar};
use crate::error::{Error, Result};
use crate::image::Image;

/// Clamp applied to probabilities inside the loss.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    /// im2col patches, `patch_len × conv_len`.
    pub cols: Vec<T>,
    /// Post-ReLU convolution output, `C × conv_h × conv_w`.
    pub act: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SampleCache<T> {
    pub blocks: Vec<BlockCache<T>>,
    pub features: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> SampleCache<T> {
    /// Activations `A^k` of the explained (last) convolution layer.
    pub fn target_activation(&self) -> &[T] {
        &self.blocks.last().expect("at least one block").act
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|z| sigmoid(z.as_f64())).collect()
    }
}

/// Activations and logits for exactly one batch under exactly one parameter
/// state (identified by checksum).
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub params_checksum: u64,
    pub samples: Vec<SampleCache<T>>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn to_chw<T: Scalar>(img: &Image) -> Vec<T> {
    let (h, w, c) = img.shape();
    let mut out = vec![T::zero(); h * w * c];
    for (p, px) in img.data.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            out[ch * h * w + p] = T::from_f32(v);
        }
    }
    out
}

fn im2col<T: Scalar>(input: &[T], s: &BlockShape) -> Vec<T> {
    let n = s.conv_len();
    let mut cols = vec![T::zero(); s.patch_len() * n];
    let k = s.kernel;
    for c in 0..s.in_channels {
        let plane = &input[c * s.in_h * s.in_w..(c + 1) * s.in_h * s.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..s.conv_h {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.in_h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * s.in_w..(iy as usize + 1) * s.in_w];
                    for ox in 0..s.conv_w {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < s.in_w as isize {
                            dst[oy * s.conv_w + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(dcols: &[T], s: &BlockShape) -> Vec<T> {
    let n = s.conv_len();
    let mut out = vec![T::zero(); s.in_channels * s.in_h * s.in_w];
    let k = s.kernel;
    for c in 0..s.in_channels {
        let plane = &mut out[c * s.in_h * s.in_w..(c + 1) * s.in_h * s.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &dcols[row * n..(row + 1) * n];
                for oy in 0..s.conv_h {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.in_h as isize {
                        continue;
                    }
                    for ox in 0..s.conv_w {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < s.in_w as isize {
                            plane[iy as usize * s.in_w + ix as usize] += src[oy * s.conv_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

fn avg_pool<T: Scalar>(act: &[T], s: &BlockShape) -> Vec<T> {
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); s.out_channels * s.pool_h * s.pool_w];
    for c in 0..s.out_channels {
        let a = &act[c * s.conv_len()..(c + 1) * s.conv_len()];
        for py in 0..s.pool_h {
            for px in 0..s.pool_w {
                let i = 2 * py * s.conv_w + 2 * px;
                let sum = a[i] + a[i + 1] + a[i + s.conv_w] + a[i + s.conv_w + 1];
                out[(c * s.pool_h + py) * s.pool_w + px] = sum * quarter;
            }
        }
    }
    out
}

fn avg_pool_backward<T: Scalar>(dpooled: &[T], s: &BlockShape) -> Vec<T> {
    let quarter = T::from_f64(0.25);
    let mut dact = vec![T::zero(); s.out_channels * s.conv_len()];
    for c in 0..s.out_channels {
        let d = &mut dact[c * s.conv_len()..(c + 1) * s.conv_len()];
        for py in 0..s.pool_h {
            for px in 0..s.pool_w {
                let g = dpooled[(c * s.pool_h + py) * s.pool_w + px] * quarter;
                let i = 2 * py * s.conv_w + 2 * px;
                d[i] = g;
                d[i + 1] = g;
                d[i + s.conv_w] = g;
                d[i + s.conv_w + 1] = g;
            }
        }
    }
    dact
}

fn check_image<T: Scalar>(params: &ModelParams<T>, img: &Image) -> Result<()> {
    let a = &params.arch;
    if img.shape() != (a.input_height, a.input_width, a.input_channels) {
        return Err(Error::Contract(format!(
            "image is {}x{}x{}, model expects {}x{}x{}",
            img.height, img.width, img.channels, a.input_height, a.input_width, a.input_channels
        )));
    }
    Ok(())
}

/// Runs one image through the network. With `keep` off, im2col buffers are
/// dropped as soon as they are used.
pub fn forward_sample<T: Scalar>(
    params: &ModelParams<T>,
    shapes: &[BlockShape],
    image: &Image,
    keep: bool,
) -> SampleCache<T> {
    let mut x = to_chw::<T>(image);
    let mut blocks = Vec::with_capacity(shapes.len());
    for (i, s) in shapes.iter().enumerate() {
        let cols = im2col(&x, s);
        let n = s.conv_len();
        let mut act = vec![T::zero(); s.out_channels * n];
        matmul(
            s.out_channels,
            s.patch_len(),
            n,
            Operand::n(params.conv_weight(i)),
            Operand::n(&cols),
            T::zero(),
            &mut act,
        );
        for (c, &b) in params.conv_bias(i).iter().enumerate() {
            for v in &mut act[c * n..(c + 1) * n] {
                let z = *v + b;
                *v = if z > T::zero() { z } else { T::zero() };
            }
        }
        x = avg_pool(&act, s);
        blocks.push(BlockCache {
            cols: if keep { cols } else { Vec::new() },
            act,
        });
    }
    let last = shapes.last().expect("validated");
    let area = last.pool_h * last.pool_w;
    let inv_area = T::from_f64(1.0 / area as f64);
    let features: Vec<T> = x
        .chunks_exact(area)
        .map(|ch| ch.iter().copied().sum::<T>() * inv_area)
        .collect();
    let c = features.len();
    let logits = params
        .head_weight()
        .chunks_exact(c)
        .zip(params.head_bias())
        .map(|(row, &b)| row.iter().zip(&features).map(|(&w, &f)| w * f).sum::<T>() + b)
        .collect();
    SampleCache {
        blocks,
        features,
        logits,
    }
}

/// Forward pass over a batch, retaining everything backward needs.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    images: &[Image],
) -> Result<(Vec<Vec<f64>>, ForwardCache<T>)> {
    let shapes = params.arch.block_shapes()?;
    for img in images {
        check_image(params, img)?;
    }
    let samples: Vec<SampleCache<T>> = images
        .par_iter()
        .map(|img| forward_sample(params, &shapes, img, true))
        .collect();
    let probs = samples.iter().map(SampleCache::probabilities).collect();
    Ok((
        probs,
        ForwardCache {
            params_checksum: params.checksum(),
            samples,
        },
    ))
}

/// Per-label probabilities only.
pub fn predict<T: Scalar>(params: &ModelParams<T>, images: &[Image]) -> Result<Vec<Vec<f64>>> {
    let shapes = params.arch.block_shapes()?;
    for img in images {
        check_image(params, img)?;
    }
    Ok(images
        .par_iter()
        .map(|img| forward_sample(params, &shapes, img, false).probabilities())
        .collect())
}

/// Gradient of the loss with respect to one sample's logits, before the
/// `1 / (B·L)` batch averaging. Terms whose probability sits in the clamp
/// region have zero derivative, matching the clamped loss exactly.
fn logit_grad(logits: &[f64], labels: &[bool]) -> Vec<f64> {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = sigmoid(z);
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                0.0
            } else {
                p - if y { 1.0 } else { 0.0 }
            }
        })
        .collect()
}

/// Backpropagates `dlogits` from the head down to the last block's
/// post-ReLU activations (`dL/dA`), accumulating head gradients if given.
fn head_backward<T: Scalar>(
    params: &ModelParams<T>,
    shapes: &[BlockShape],
    cache: &SampleCache<T>,
    dlogits: &[T],
    mut head_grads: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let c = cache.features.len();
    let w = params.head_weight();
    let mut dfeat = vec![T::zero(); c];
    for (l, &g) in dlogits.iter().enumerate() {
        for k in 0..c {
            dfeat[k] += g * w[l * c + k];
        }
        if let Some((gw, gb)) = head_grads.as_mut() {
            for k in 0..c {
                gw[l * c + k] += g * cache.features[k];
            }
            gb[l] += g;
        }
    }
    let last = shapes.last().expect("validated");
    let area = last.pool_h * last.pool_w;
    let inv_area = T::from_f64(1.0 / area as f64);
    let dpooled: Vec<T> = dfeat
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * inv_area, area))
        .collect();
    avg_pool_backward(&dpooled, last)
}

/// `∂ logit_label / ∂ A^k` at the last convolution layer, laid out like
/// [`SampleCache::target_activation`].
pub fn target_activation_grad<T: Scalar>(
    params: &ModelParams<T>,
    cache: &SampleCache<T>,
    label: usize,
) -> Result<Vec<T>> {
    let shapes = params.arch.block_shapes()?;
    if label >= params.arch.n_labels {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} labels",
            params.arch.n_labels
        )));
    }
    let mut seed = vec![T::zero(); params.arch.n_labels];
    seed[label] = T::one();
    Ok(head_backward(params, &shapes, cache, &seed, None))
}

fn sample_backward<T: Scalar>(
    params: &ModelParams<T>,
    shapes: &[BlockShape],
    cache: &SampleCache<T>,
    dlogits: &[T],
) -> ModelParams<T> {
    let mut grads = ModelParams::<T>::zeros(&params.arch).expect("validated arch");
    let nb = grads.blocks.len();
    let (convs, head) = grads.blocks.split_at_mut(nb - 2);
    let (hw, hb) = head.split_at_mut(1);
    let mut dact = head_backward(
        params,
        shapes,
        cache,
        dlogits,
        Some((&mut hw[0].data, &mut hb[0].data)),
    );
    for i in (0..shapes.len()).rev() {
        let s = &shapes[i];
        let bc = &cache.blocks[i];
        let n = s.conv_len();
        // ReLU: pass gradient where the activation was positive.
        for (d, &a) in dact.iter_mut().zip(&bc.act) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        let (wblk, rest) = convs[2 * i..].split_at_mut(1);
        matmul(
            s.out_channels,
            n,
            s.patch_len(),
            Operand::n(&dact),
            Operand::t(&bc.cols),
            T::zero(),
            &mut wblk[0].data,
        );
        for (c, gb) in rest[0].data.iter_mut().enumerate() {
            *gb = dact[c * n..(c + 1) * n].iter().copied().sum();
        }
        if i > 0 {
            let mut dcols = vec![T::zero(); s.patch_len() * n];
            matmul(
                s.patch_len(),
                s.out_channels,
                n,
                Operand::t(params.conv_weight(i)),
                Operand::n(&dact),
                T::zero(),
                &mut dcols,
            );
            let dinput = col2im(&dcols, s);
            dact = avg_pool_backward(&dinput, &shapes[i - 1]);
        }
    }
    grads
}

/// Exact gradient of [`super::loss::bce_l2_loss`] for the batch in `cache`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    labels: &[Vec<bool>],
    l2_lambda: f64,
) -> Result<ModelParams<T>> {
    if cache.params_checksum != params.checksum() {
        return Err(Error::Contract(
            "stale forward cache: parameters changed since the forward pass".into(),
        ));
    }
    if labels.len() != cache.samples.len() {
        return Err(Error::Contract(format!(
            "{} label vectors for a batch of {}",
            labels.len(),
            cache.samples.len()
        )));
    }
    let n_labels = params.arch.n_labels;
    if labels.iter().any(|l| l.len() != n_labels) {
        return Err(Error::Contract("label vector length mismatch".into()));
    }
    let shapes = params.arch.block_shapes()?;
    let scale = 1.0 / (labels.len() * n_labels) as f64;
    let per_sample: Vec<ModelParams<T>> = cache
        .samples
        .par_iter()
        .zip(labels.par_iter())
        .map(|(sc, y)| {
            let z: Vec<f64> = sc.logits.iter().map(|v| v.as_f64()).collect();
            let d: Vec<T> = logit_grad(&z, y)
                .into_iter()
                .map(|g| T::from_f64(g * scale))
                .collect();
            sample_backward(params, &shapes, sc, &d)
        })
        .collect();
    let mut grads = ModelParams::<T>::zeros(&params.arch)?;
    for g in &per_sample {
        grads.add_assign(g);
    }
    add_l2_grad(params, &mut grads, l2_lambda);
    Ok(grads)
}

/// `grads += 2λθ` on non-bias blocks.
pub fn add_l2_grad<T: Scalar>(params: &ModelParams<T>, grads: &mut ModelParams<T>, l2_lambda: f64) {
    if l2_lambda == 0.0 {
        return;
    }
    let two_l = T::from_f64(2.0 * l2_lambda);
    for (g, p) in grads.blocks.iter_mut().zip(&params.blocks) {
        if !p.kind.is_bias() {
            for (gv, &pv) in g.data.iter_mut().zip(&p.data) {
                *gv += two_l * pv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::arch::{ArchitectureDescriptor, ConvBlock};

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let arch = ArchitectureDescriptor {
            input_height: 5,
            input_width: 6,
            input_channels: 2,
            blocks: vec![ConvBlock {
                channels: 3,
                kernel: 3,
                stride: 2,
            }],
            n_labels: 1,
        };
        let s = arch.block_shapes().unwrap()[0];
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..s.patch_len() * s.conv_len())
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let lhs: f64 = im2col(&x, &s).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&y, &s)).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn zero_params_give_one_half() {
        let arch = ArchitectureDescriptor::default_for(32, 32, 1, 3);
        let p = ModelParams::<f32>::zeros(&arch).unwrap();
        let img = Image::filled(32, 32, 1, 0.7);
        let (probs, _) = forward(&p, &[img]).unwrap();
        assert_eq!(probs, vec![vec![0.5; 3]]);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let arch = ArchitectureDescriptor::default_for(32, 32, 1, 3);
        let p = ModelParams::<f32>::zeros(&arch).unwrap();
        assert!(matches!(
            forward(&p, &[Image::zeros(16, 32, 1)]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let arch = ArchitectureDescriptor::default_for(32, 32, 1, 2);
        let mut p = ModelParams::<f64>::init(&arch, 3).unwrap();
        let (_, cache) = forward(&p, &[Image::filled(32, 32, 1, 0.5)]).unwrap();
        p.blocks[0].data[0] += 1.0;
        assert!(matches!(
            backward(&p, &cache, &[vec![true, false]], 0.0),
            Err(Error::Contract(_))
        ));
    }
}

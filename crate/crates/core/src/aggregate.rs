//! Label-wise and overall global explanations.
//!
//! `E^l = (1/n(l)) Σ_i p̂_i(l) · E^l_i` over the ground-truth positives of
//! label `l`, and `E^Overall` is the unweighted mean of the `E^l`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradcam::{gradcam_from_cache, ExplanationMap, Normalization, Provenance};
use crate::model::{forward_sample, ModelParams, Scalar};
use crate::synthdata::{Dataset, DatasetManifest, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weight each map by the predicted probability of its label.
    #[default]
    Prob,
    Uniform,
}

impl Weighting {
    pub fn token(self) -> &'static str {
        match self {
            Weighting::Prob => "prob",
            Weighting::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelGlobalExplanation {
    pub map: ExplanationMap,
    pub label: usize,
    pub n_positives: usize,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverallGlobalExplanation {
    pub map: ExplanationMap,
    pub n_labels: usize,
}

/// Ground-truth positives of `label` in `split`, in manifest order.
pub fn select_positives(
    manifest: &DatasetManifest,
    split: Split,
    label: usize,
) -> Result<Vec<usize>> {
    if split == Split::Train {
        return Err(Error::Config(
            "global explanations are built on val or test, not train".into(),
        ));
    }
    if label >= manifest.n_labels() {
        return Err(Error::Contract(format!("label {label} out of range")));
    }
    let idx: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == split && r.labels[label])
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyInput(format!(
            "label {label} has no positive samples in {split}"
        )));
    }
    Ok(idx)
}

fn check_shapes(maps: &[&ExplanationMap]) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| Error::EmptyInput("no maps to aggregate".into()))?;
    if let Some(bad) = maps.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::Contract(format!(
            "map {} is {}x{}, expected {}x{}",
            bad.provenance, bad.height, bad.width, first.height, first.width
        )));
    }
    Ok(())
}

/// Weighted mean with divisor `n(l)` (not `Σ p̂`), summed in input order.
pub fn label_global(
    maps: &[ExplanationMap],
    probs: &[f64],
    label: usize,
) -> Result<LabelGlobalExplanation> {
    if maps.len() != probs.len() {
        return Err(Error::Contract(format!(
            "{} maps but {} probabilities",
            maps.len(),
            probs.len()
        )));
    }
    check_shapes(&maps.iter().collect::<Vec<_>>())?;
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Contract(format!("weight {p} outside (0, 1]")));
    }
    let n = maps.len();
    let mut acc = vec![0f64; maps[0].len()];
    for (m, &p) in maps.iter().zip(probs) {
        for (a, &v) in acc.iter_mut().zip(&m.data) {
            *a += p * f64::from(v);
        }
    }
    let data = acc.into_iter().map(|a| (a / n as f64) as f32).collect();
    Ok(LabelGlobalExplanation {
        map: ExplanationMap::new(
            maps[0].height,
            maps[0].width,
            data,
            Normalization::Raw,
            Provenance::LabelGlobal { label },
        )?,
        label,
        n_positives: n,
        weight_sum: probs.iter().sum(),
    })
}

/// Unweighted mean of the label-wise maps.
pub fn overall_global(labels: &[LabelGlobalExplanation]) -> Result<OverallGlobalExplanation> {
    check_shapes(&labels.iter().map(|l| &l.map).collect::<Vec<_>>())?;
    let n = labels.len();
    let mut acc = vec![0f64; labels[0].map.len()];
    for l in labels {
        for (a, &v) in acc.iter_mut().zip(&l.map.data) {
            *a += f64::from(v);
        }
    }
    let data = acc.into_iter().map(|a| (a / n as f64) as f32).collect();
    Ok(OverallGlobalExplanation {
        map: ExplanationMap::new(
            labels[0].map.height,
            labels[0].map.width,
            data,
            Normalization::Raw,
            Provenance::Overall,
        )?,
        n_labels: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplainOptions {
    pub normalization: Normalization,
    pub weighting: Weighting,
    pub flip: bool,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            normalization: Normalization::MaxOne,
            weighting: Weighting::Prob,
            flip: true,
        }
    }
}

/// One image-wise explanation kept for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleExplanation {
    pub record: usize,
    pub label: usize,
    pub prob: f64,
    pub map: ExplanationMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitExplanation {
    pub labels: Vec<LabelGlobalExplanation>,
    pub overall: OverallGlobalExplanation,
    pub samples: Vec<SampleExplanation>,
}

/// Explains every positive (sample, label) pair of `split` and aggregates.
pub fn explain_split<T: Scalar>(
    params: &ModelParams<T>,
    dataset: &Dataset,
    split: Split,
    opts: &ExplainOptions,
) -> Result<SplitExplanation> {
    let shapes = params.arch.block_shapes()?;
    let n_labels = params.arch.n_labels;
    if dataset.manifest.n_labels() != n_labels {
        return Err(Error::Contract(format!(
            "model has {n_labels} labels, manifest has {}",
            dataset.manifest.n_labels()
        )));
    }
    let positives = (0..n_labels)
        .map(|l| select_positives(&dataset.manifest, split, l))
        .collect::<Result<Vec<_>>>()?;
    let mut union: Vec<usize> = positives.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    let per_sample: Vec<Vec<SampleExplanation>> = union
        .par_iter()
        .map(|&i| {
            let rec = &dataset.manifest.records[i];
            let cache =
                forward_sample(params, &shapes, &dataset.aligned_image(i, opts.flip), false);
            let probs = cache.probabilities();
            (0..n_labels)
                .filter(|&l| rec.labels[l])
                .map(|l| {
                    Ok(SampleExplanation {
                        record: i,
                        label: l,
                        prob: probs[l],
                        map: gradcam_from_cache(
                            params,
                            &cache,
                            l,
                            &rec.sample_id,
                            opts.normalization,
                        )?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SampleExplanation> = per_sample.into_iter().flatten().collect();
    let mut labels = Vec::with_capacity(n_labels);
    for l in 0..n_labels {
        let (maps, probs): (Vec<ExplanationMap>, Vec<f64>) = samples
            .iter()
            .filter(|s| s.label == l)
            .map(|s| {
                let w = match opts.weighting {
                    Weighting::Prob => s.prob,
                    Weighting::Uniform => 1.0,
                };
                (s.map.clone(), w)
            })
            .unzip();
        labels.push(label_global(&maps, &probs, l)?);
    }
    let overall = overall_global(&labels)?;
    Ok(SplitExplanation {
        labels,
        overall,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn map(h: usize, w: usize, data: Vec<f32>) -> ExplanationMap {
        ExplanationMap::new(h, w, data, Normalization::MaxOne, Provenance::Overall).unwrap()
    }

    #[test]
    fn singleton_and_half_weights() {
        let m = map(2, 2, vec![0.0, 0.5, 1.0, 0.25]);
        let g = label_global(std::slice::from_ref(&m), &[1.0], 0).unwrap();
        assert_eq!(g.map.data, m.data);
        let g = label_global(&[m.clone(), m.clone()], &[0.5, 0.5], 0).unwrap();
        let want: Vec<f32> = m.data.iter().map(|v| 0.5 * v).collect();
        assert_eq!(g.map.data, want);
        assert_eq!(g.n_positives, 2);
        assert_eq!(g.weight_sum, 1.0);
    }

    #[test]
    fn shape_mismatch_and_bad_weights() {
        let a = map(2, 2, vec![0.0; 4]);
        let b = map(1, 4, vec![0.0; 4]);
        assert!(matches!(
            label_global(&[a.clone(), b], &[0.5, 0.5], 0),
            Err(Error::Contract(_))
        ));
        assert!(label_global(std::slice::from_ref(&a), &[0.0], 0).is_err());
        assert!(matches!(
            label_global(&[], &[], 0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn overall_is_plain_mean() {
        let a = label_global(&[map(1, 2, vec![1.0, 0.0])], &[1.0], 0).unwrap();
        let b = label_global(&[map(1, 2, vec![0.0, 0.5])], &[1.0], 1).unwrap();
        let o = overall_global(&[a.clone(), b]).unwrap();
        assert_eq!(o.map.data, vec![0.5, 0.25]);
        assert_eq!(o.n_labels, 2);
        assert_eq!(
            overall_global(std::slice::from_ref(&a)).unwrap().map.data,
            a.map.data
        );
    }

    #[test]
    fn random_instances_match_wide_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let maps: Vec<ExplanationMap> = (0..5)
                .map(|_| map(4, 4, (0..16).map(|_| rng.random::<f32>()).collect()))
                .collect();
            let probs: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let g = label_global(&maps, &probs, 0).unwrap();
            for px in 0..16 {
                let want: f64 = maps
                    .iter()
                    .zip(&probs)
                    .map(|(m, p)| p * m.data[px] as f64)
                    .sum::<f64>()
                    / 5.0;
                let got = g.map.data[px] as f64;
                assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-30));
                assert!(got <= probs.iter().cloned().fold(0.0, f64::max) + 1e-7);
            }
        }
    }
}

//! Progressive erasing plus progressive restoration.
//!
//! Pixels of the overall global explanation are ranked once, ascending by
//! importance with ties broken by row-major index. At quantile `v` the erasure
//! direction removes the `round(v·N)` lowest-ranked pixels; the restoration
//! direction keeps exactly those pixels, so the two partition the image.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradcam::ExplanationMap;
use crate::image::Image;
use crate::metrics::{roc_auc, ScoredLabelSet};
use crate::model::{predict, ModelParams, Scalar};
use crate::rng;
use crate::synthdata::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fill {
    TrainMean,
    #[default]
    RandomNoise,
}

impl Fill {
    pub fn token(self) -> &'static str {
        match self {
            Fill::TrainMean => "train-mean",
            Fill::RandomNoise => "noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Erasure,
    Restoration,
}

impl Direction {
    pub fn token(self) -> &'static str {
        match self {
            Direction::Erasure => "erasure",
            Direction::Restoration => "restoration",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erasure" => Ok(Direction::Erasure),
            "restoration" => Ok(Direction::Restoration),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

/// Pixel indices sorted ascending by importance, ties by index.
pub fn importance_order(values: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Quantile grid `0, q, 2q, …, 1`. When `1/q` is an integer the points are
/// computed as `k/K` so that they land exactly on the grid.
pub fn quantile_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::Config(format!(
            "quantile step {step} outside (0, 0.5]"
        )));
    }
    let k = (1.0 / step).round();
    if (k * step - 1.0).abs() < 1e-9 {
        let k = k as usize;
        return Ok((0..=k).map(|i| i as f64 / k as f64).collect());
    }
    let mut grid: Vec<f64> = (0..)
        .map(|i| i as f64 * step)
        .take_while(|v| *v < 1.0 - 1e-9)
        .collect();
    grid.push(1.0);
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMaskSeries {
    pub height: usize,
    pub width: usize,
    pub quantiles: Vec<f64>,
    /// `masks[k][p]` is true when pixel `p` is retained by the erasure
    /// direction at `quantiles[k]`.
    pub masks: Vec<Vec<bool>>,
    /// Importance rank of the source map, ascending.
    pub order: Vec<usize>,
}

impl QuantileMaskSeries {
    pub fn erased_count(&self, k: usize) -> usize {
        erased_count(self.quantiles[k], self.order.len())
    }

    pub fn mask(&self, direction: Direction, k: usize) -> Vec<bool> {
        match direction {
            Direction::Erasure => self.masks[k].clone(),
            Direction::Restoration => self.masks[k].iter().map(|m| !m).collect(),
        }
    }
}

pub fn erased_count(v: f64, n: usize) -> usize {
    ((v * n as f64).round() as usize).min(n)
}

pub fn quantile_masks(map: &ExplanationMap, step: f64) -> Result<QuantileMaskSeries> {
    if map.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "map {} is not finite",
            map.provenance
        )));
    }
    let quantiles = quantile_grid(step)?;
    let order = importance_order(&map.data);
    let n = order.len();
    let masks = quantiles
        .iter()
        .map(|&v| {
            let mut m = vec![true; n];
            for &p in &order[..erased_count(v, n)] {
                m[p] = false;
            }
            m
        })
        .collect();
    Ok(QuantileMaskSeries {
        height: map.height,
        width: map.width,
        quantiles,
        masks,
        order,
    })
}

/// Copies retained pixels and fills the others on every channel. Noise is
/// drawn for the whole image so the value at a pixel does not depend on the
/// mask.
pub fn apply_mask<R: Rng + ?Sized>(
    image: &Image,
    mask: &[bool],
    fill: Fill,
    train_mean: Option<&Image>,
    rng: &mut R,
) -> Result<Image> {
    if mask.len() != image.height * image.width {
        return Err(Error::Contract(format!(
            "mask has {} pixels, image {}x{}",
            mask.len(),
            image.height,
            image.width
        )));
    }
    let c = image.channels;
    let mut out = image.clone();
    match fill {
        Fill::TrainMean => {
            let mean = train_mean
                .ok_or_else(|| Error::Config("train-mean fill needs a train mean image".into()))?;
            if !mean.same_shape(image) {
                return Err(Error::Contract(
                    "train mean differs in shape from image".into(),
                ));
            }
            for (p, &keep) in mask.iter().enumerate() {
                if !keep {
                    out.data[p * c..(p + 1) * c].copy_from_slice(&mean.data[p * c..(p + 1) * c]);
                }
            }
        }
        Fill::RandomNoise => {
            let noise: Vec<f32> = (0..image.data.len()).map(|_| rng.random::<f32>()).collect();
            for (p, &keep) in mask.iter().enumerate() {
                if !keep {
                    out.data[p * c..(p + 1) * c].copy_from_slice(&noise[p * c..(p + 1) * c]);
                }
            }
        }
    }
    Ok(out)
}

/// Share of total importance that lies in retained pixels.
pub fn retained_importance(map: &ExplanationMap, mask: &[bool]) -> Result<f64> {
    if mask.len() != map.len() {
        return Err(Error::Contract("mask and map differ in size".into()));
    }
    let total: f64 = map.data.iter().map(|&v| f64::from(v)).sum();
    if total <= 0.0 {
        return Err(Error::Numeric(format!(
            "degenerate input: map {} has no importance",
            map.provenance
        )));
    }
    let kept: f64 = map
        .data
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { f64::from(v) } else { 0.0 })
        .sum();
    Ok(kept / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PepprCurves {
    pub direction: Direction,
    pub quantiles: Vec<f64>,
    /// `auc[k][l]`
    pub auc: Vec<Vec<f64>>,
    pub retained_importance: Vec<f64>,
    pub baseline_auc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PepprResult {
    pub erasure: PepprCurves,
    pub restoration: PepprCurves,
}

/// How often the noise fill is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDraw {
    /// A fresh field for every image at every quantile step.
    #[default]
    PerStep,
    /// One field per image, reused at every step and in both directions.
    PerSample,
}

impl NoiseDraw {
    pub fn token(self) -> &'static str {
        match self {
            NoiseDraw::PerStep => "per-step",
            NoiseDraw::PerSample => "per-sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepprConfig {
    pub step: f64,
    pub fill: Fill,
    pub seed: u64,
    pub flip: bool,
    pub noise: NoiseDraw,
}

impl Default for PepprConfig {
    fn default() -> Self {
        PepprConfig {
            step: 0.05,
            fill: Fill::RandomNoise,
            seed: 0,
            flip: true,
            noise: NoiseDraw::PerStep,
        }
    }
}

fn label_aucs(probs: &[Vec<f64>], truths: &[Vec<bool>]) -> Result<Vec<f64>> {
    let n_labels = truths.first().map_or(0, Vec::len);
    (0..n_labels)
        .map(|l| {
            let s: Vec<f64> = probs.iter().map(|p| p[l]).collect();
            let t: Vec<bool> = truths.iter().map(|y| y[l]).collect();
            roc_auc(&ScoredLabelSet::new(&s, &t, l))
        })
        .collect()
}

/// Scores the fixed model on masked copies of the samples at `indices`, in
/// both directions at every quantile of the series built from `overall`.
///
/// Noise for sample `s` at quantile step `k` comes from a stream keyed by
/// `(seed, k, sample_id)`, or by `(seed, sample_id)` under
/// [`NoiseDraw::PerSample`].
pub fn run_peppr<T: Scalar>(
    params: &ModelParams<T>,
    dataset: &Dataset,
    indices: &[usize],
    overall: &ExplanationMap,
    train_mean: Option<&Image>,
    config: &PepprConfig,
) -> Result<PepprResult> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("no samples to evaluate".into()));
    }
    if (overall.height, overall.width) != (params.arch.input_height, params.arch.input_width) {
        return Err(Error::Contract(
            "explanation and model input differ in size".into(),
        ));
    }
    if config.fill == Fill::TrainMean && train_mean.is_none() {
        return Err(Error::Config(
            "train-mean fill needs a train mean image".into(),
        ));
    }
    let checksum = params.checksum();
    let series = quantile_masks(overall, config.step)?;
    let images: Vec<Image> = indices
        .iter()
        .map(|&i| dataset.aligned_image(i, config.flip))
        .collect();
    let truths: Vec<Vec<bool>> = indices
        .iter()
        .map(|&i| dataset.manifest.records[i].labels.clone())
        .collect();
    let keys: Vec<u64> = indices
        .iter()
        .map(|&i| rng::key_of(&dataset.manifest.records[i].sample_id))
        .collect();
    let baseline = label_aucs(&predict(params, &images)?, &truths)?;

    let run = |direction: Direction| -> Result<PepprCurves> {
        let mut auc = Vec::with_capacity(series.quantiles.len());
        let mut retained = Vec::with_capacity(series.quantiles.len());
        for k in 0..series.quantiles.len() {
            let mask = series.mask(direction, k);
            retained.push(retained_importance(overall, &mask)?);
            let masked: Vec<Image> = images
                .par_iter()
                .zip(&keys)
                .map(|(img, &key)| {
                    let mut r = match config.noise {
                        NoiseDraw::PerStep => {
                            rng::stream(config.seed, "peppr-noise", &[k as u64, key])
                        }
                        NoiseDraw::PerSample => {
                            rng::stream(config.seed, "peppr-noise-sample", &[key])
                        }
                    };
                    apply_mask(img, &mask, config.fill, train_mean, &mut r)
                })
                .collect::<Result<_>>()?;
            auc.push(label_aucs(&predict(params, &masked)?, &truths)?);
        }
        Ok(PepprCurves {
            direction,
            quantiles: series.quantiles.clone(),
            auc,
            retained_importance: retained,
            baseline_auc: baseline.clone(),
        })
    };
    let result = PepprResult {
        erasure: run(Direction::Erasure)?,
        restoration: run(Direction::Restoration)?,
    };
    if params.checksum() != checksum {
        return Err(Error::Contract(
            "parameters changed during evaluation".into(),
        ));
    }
    Ok(result)
}

pub const CURVES_HEADER: &str = "direction,quantile,label,auc,retained_importance,baseline_auc";

/// One row per (direction, quantile, label). Floats use Rust's shortest
/// round-trip formatting.
pub fn write_curves_csv<W: Write>(
    result: &PepprResult,
    label_names: &[String],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Numeric(format!("writing curves: {e}"));
    w.write_record(CURVES_HEADER.split(',')).map_err(csv_err)?;
    for curves in [&result.erasure, &result.restoration] {
        for (k, &v) in curves.quantiles.iter().enumerate() {
            for (l, name) in label_names.iter().enumerate() {
                w.write_record([
                    curves.direction.token().to_string(),
                    v.to_string(),
                    name.clone(),
                    curves.auc[k][l].to_string(),
                    curves.retained_importance[k].to_string(),
                    curves.baseline_auc[l].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<curves>", e))?;
    Ok(())
}

/// A parsed curves row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub direction: Direction,
    pub quantile: f64,
    pub label: String,
    pub auc: f64,
    pub retained_importance: f64,
    pub baseline_auc: f64,
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = (i + 2) as u64;
        let perr = |m: String| Error::Parse {
            path: name.clone(),
            line,
            message: m,
        };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 6 {
            return Err(perr(format!("expected 6 fields, got {}", rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| perr(format!("bad number {:?}", &rec[j])))
        };
        rows.push(CurveRow {
            direction: rec[0]
                .parse()
                .map_err(|_| perr(format!("bad direction {:?}", &rec[0])))?,
            quantile: num(1)?,
            label: rec[2].to_string(),
            auc: num(3)?,
            retained_importance: num(4)?,
            baseline_auc: num(5)?,
        });
    }
    Ok(rows)
}

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::ArchitectureDescriptor;
use super::augment::{random_erasing, ErasingConfig};
use super::loss::bce_l2_loss;
use super::network::{backward, forward, predict};
use super::params::ModelParams;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::metrics::{roc_auc, ScoredLabelSet};
use crate::rng;
use crate::synthdata::{Dataset, Split};

use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub erasing_prob: f64,
    pub erasing_area: (f64, f64),
    pub erasing_aspect: (f64, f64),
    pub seed: u64,
    /// Mirror right-laterality images before they reach the model.
    pub flip: bool,
}

/// Defaults for training from scratch. A learning rate of `5e-5` over 5
/// epochs suits fine-tuning a pretrained backbone; from a random
/// initialization it does not leave the label-prior plateau.
impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            l2_lambda: 5e-5,
            batch_size: 32,
            epochs: 12,
            erasing_prob: 0.3,
            erasing_area: (0.05, 0.40),
            erasing_aspect: (0.3, 3.3),
            seed: 0,
            flip: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return fail("L2 penalty must be non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch size and epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.erasing_prob) {
            return fail("erasing probability must lie in [0, 1]");
        }
        let (a0, a1) = self.erasing_area;
        if !(0.0 < a0 && a0 <= a1 && a1 < 1.0) {
            return fail("erasing area range must be ordered within (0, 1)");
        }
        let (r0, r1) = self.erasing_aspect;
        if !(0.0 < r0 && r0 <= r1) {
            return fail("erasing aspect range must be ordered and positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: 1e-8,
        }
    }

    pub fn erasing(&self) -> ErasingConfig {
        ErasingConfig {
            prob: self.erasing_prob,
            area: self.erasing_area,
            aspect: self.erasing_aspect,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the per-step training losses (augmented inputs).
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochStats>,
}

/// Per-label AUC of `params` on the samples at `indices`.
pub fn evaluate_auc<T: Scalar>(
    params: &ModelParams<T>,
    dataset: &Dataset,
    indices: &[usize],
    flip: bool,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let images: Vec<_> = indices
        .iter()
        .map(|&i| dataset.aligned_image(i, flip))
        .collect();
    let probs = predict(params, &images)?;
    let n_labels = params.arch.n_labels;
    let mut aucs = Vec::with_capacity(n_labels);
    for l in 0..n_labels {
        let scores: Vec<f64> = probs.iter().map(|p| p[l]).collect();
        let truths: Vec<bool> = indices
            .iter()
            .map(|&i| dataset.manifest.records[i].labels[l])
            .collect();
        aucs.push(roc_auc(&ScoredLabelSet::new(&scores, &truths, l))?);
    }
    Ok((aucs, probs))
}

/// Head biases start at the training-set log-odds of each label, so the first
/// updates go into features rather than into matching label frequencies.
fn set_prior_bias<T: Scalar>(params: &mut ModelParams<T>, dataset: &Dataset, train_idx: &[usize]) {
    let n = train_idx.len() as f64;
    let nb = params.blocks.len();
    for (l, b) in params.blocks[nb - 1].data.iter_mut().enumerate() {
        let pos = train_idx
            .iter()
            .filter(|&&i| dataset.manifest.records[i].labels[l])
            .count() as f64;
        // add-one smoothing keeps the log-odds finite for one-class labels
        let p = (pos + 1.0) / (n + 2.0);
        *b = T::from_f64((p / (1.0 - p)).ln());
    }
}

/// Trains from a seeded initialization and returns the final-epoch parameters.
///
/// The epoch shuffle, augmentation and initialization draw from separate
/// named streams of `config.seed`, so disabling augmentation leaves the batch
/// order untouched.
pub fn train<T: Scalar>(
    dataset: &Dataset,
    arch: &ArchitectureDescriptor,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    arch.validate()?;
    let train_idx = dataset.manifest.indices(Split::Train);
    let val_idx = dataset.manifest.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::EmptyInput(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let mut params = ModelParams::<T>::init(arch, rng::derive_seed(config.seed, "init", &[]))?;
    set_prior_bias(&mut params, dataset, &train_idx);
    let mut state = AdamState::new(&params);
    let adam = config.adam();
    let erasing = config.erasing();
    let val_labels: Vec<Vec<bool>> = val_idx
        .iter()
        .map(|&i| dataset.manifest.records[i].labels.clone())
        .collect();
    let mut t: u64 = 0;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng::stream(config.seed, "shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<_> = batch
                .iter()
                .map(|&i| {
                    let mut img = dataset.aligned_image(i, config.flip);
                    let mut arng = rng::stream(config.seed, "augment", &[epoch as u64, i as u64]);
                    random_erasing(&mut img, &mut arng, &erasing);
                    img
                })
                .collect();
            let labels: Vec<Vec<bool>> = batch
                .iter()
                .map(|&i| dataset.manifest.records[i].labels.clone())
                .collect();
            let (probs, cache) = forward(&params, &images)?;
            let loss = bce_l2_loss(&probs, &labels, &params, config.l2_lambda)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    message: format!("non-finite loss {loss}"),
                });
            }
            let grads = backward(&params, &cache, &labels, config.l2_lambda)?;
            t += 1;
            adam_step(&mut params, &grads, &mut state, t, &adam)?;
            if !params.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    message: "non-finite parameters after update".into(),
                });
            }
            loss_sum += loss;
            steps += 1;
        }
        let (val_auc, val_probs) = evaluate_auc(&params, dataset, &val_idx, config.flip)?;
        let val_loss = bce_l2_loss(&val_probs, &val_labels, &params, config.l2_lambda)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_loss,
            val_auc,
        });
    }
    Ok(TrainOutcome { params, history })
}

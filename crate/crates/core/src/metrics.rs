//! Label-wise ROC AUC.
//!
//! AUC is computed as the normalized Mann–Whitney U statistic with average
//! ranks for ties, i.e. `P(s+ > s-) + ½·P(s+ = s-)`. Ties are exact equality of
//! scores; no epsilon is applied.

use crate::error::{Error, Result};

/// Scores and ground truth for one label over a set of samples.
#[derive(Debug, Clone)]
pub struct ScoredLabelSet<'a> {
    pub scores: &'a [f64],
    pub truths: &'a [bool],
    pub label: usize,
}

impl<'a> ScoredLabelSet<'a> {
    pub fn new(scores: &'a [f64], truths: &'a [bool], label: usize) -> Self {
        ScoredLabelSet {
            scores,
            truths,
            label,
        }
    }
}

pub fn roc_auc(set: &ScoredLabelSet<'_>) -> Result<f64> {
    let n = set.scores.len();
    if n != set.truths.len() {
        return Err(Error::Contract(format!(
            "label {}: {} scores but {} truths",
            set.label,
            n,
            set.truths.len()
        )));
    }
    if let Some(bad) = set.scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Metric(format!(
            "label {}: score {bad} is NaN",
            set.label
        )));
    }
    let n_pos = set.truths.iter().filter(|&&t| t).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "AUC undefined for label {}: {n_pos} positives, {n_neg} negatives",
            set.label
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // Sum of (1-based) positive ranks, doubled so tie averages stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j share the average (i + 1 + j) / 2.
        let twice_avg = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| set.truths[k]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j;
    }
    let p = n_pos as u128;
    // 2U = 2R - P(P+1); U counts positive/negative pairs with ties as ½.
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Convenience wrapper over plain slices.
pub fn auc(scores: &[f64], truths: &[bool]) -> Result<f64> {
    roc_auc(&ScoredLabelSet::new(scores, truths, 0))
}

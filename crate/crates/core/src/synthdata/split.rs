//! Subject-level train/val/test assignment.

use rand::seq::SliceRandom;

use super::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::rng;

pub(crate) fn check_fractions(train: f64, val: f64, test: f64) -> Result<()> {
    for f in [train, val, test] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("split fraction {f} outside [0, 1]")));
        }
    }
    let sum = train + val + test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Number of subjects per split. Val and test blocks are sized by rounding;
/// whatever is left over goes to train.
pub fn block_sizes(n_subjects: usize, fractions: (f64, f64, f64)) -> (usize, usize, usize) {
    let n = n_subjects as f64;
    let val = ((fractions.1 * n).round() as usize).min(n_subjects);
    let test = ((fractions.2 * n).round() as usize).min(n_subjects - val);
    (n_subjects - val - test, val, test)
}

/// Assigns every subject (not sample) to one split.
///
/// Subjects are listed in order of first appearance, shuffled with a stream
/// derived from `seed`, and cut into contiguous train, val and test blocks.
pub fn split_by_subject(
    manifest: &mut DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<()> {
    check_fractions(fractions.0, fractions.1, fractions.2)?;
    let mut subjects: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in &manifest.records {
        if seen.insert(r.subject_id.as_str()) {
            subjects.push(r.subject_id.clone());
        }
    }
    subjects.shuffle(&mut rng::stream(seed, "split", &[]));
    let (n_train, n_val, _) = block_sizes(subjects.len(), fractions);
    let assignment: std::collections::HashMap<&str, Split> = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (s.as_str(), split)
        })
        .collect();
    for r in &mut manifest.records {
        r.split = assignment[r.subject_id.as_str()];
    }
    Ok(())
}

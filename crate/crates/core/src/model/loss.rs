use super::network::PROB_EPS;
use super::params::ModelParams;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Mean label-wise binary cross-entropy plus `l2_lambda · Σθ²` over non-bias
/// parameters. Probabilities are clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_l2_loss<T: Scalar>(
    probabilities: &[Vec<f64>],
    labels: &[Vec<bool>],
    params: &ModelParams<T>,
    l2_lambda: f64,
) -> Result<f64> {
    if probabilities.len() != labels.len() || probabilities.is_empty() {
        return Err(Error::Contract(format!(
            "{} probability rows for {} label rows",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p_row, y_row) in probabilities.iter().zip(labels) {
        if p_row.len() != y_row.len() {
            return Err(Error::Contract("probability/label width mismatch".into()));
        }
        for (&p, &y) in p_row.iter().zip(y_row) {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            sum -= if y { p.ln() } else { (1.0 - p).ln() };
            count += 1;
        }
    }
    Ok(sum / count as f64 + l2_lambda * params.weight_sq_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::arch::ArchitectureDescriptor;

    fn params() -> ModelParams<f64> {
        ModelParams::init(&ArchitectureDescriptor::default_for(32, 32, 1, 2), 4).unwrap()
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let probs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![vec![true, false], vec![false, true]];
        assert!(bce_l2_loss(&probs, &labels, &params(), 0.0).unwrap() <= 1e-6);
    }

    #[test]
    fn one_half_gives_ln_two() {
        let probs = vec![vec![0.5; 2]; 3];
        let labels = vec![vec![true, false]; 3];
        let l = bce_l2_loss(&probs, &labels, &params(), 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn l2_term_uses_weights_only() {
        let mut p = params();
        for b in &mut p.blocks {
            for v in &mut b.data {
                *v = if b.kind.is_bias() { 100.0 } else { 0.5 };
            }
        }
        let n_weights: usize = p
            .blocks
            .iter()
            .filter(|b| !b.kind.is_bias())
            .map(|b| b.data.len())
            .sum();
        let probs = vec![vec![0.5; 2]];
        let labels = vec![vec![true, true]];
        let l = bce_l2_loss(&probs, &labels, &p, 0.1).unwrap();
        let expected = std::f64::consts::LN_2 + 0.1 * 0.25 * n_weights as f64;
        assert!((l - expected).abs() < 1e-9);
    }
}

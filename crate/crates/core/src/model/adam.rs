use super::params::ModelParams;
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .blocks
            .iter()
            .map(|b| vec![T::zero(); b.data.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of a flat parameter slice at step `t ≥ 1`.
pub fn adam_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) {
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::from_f64(1.0 - cfg.beta2.powf(t as f64));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.eps);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Contract("Adam step counter starts at 1".into()));
    }
    params.same_layout(grads)?;
    for (i, (p, g)) in params.blocks.iter_mut().zip(&grads.blocks).enumerate() {
        adam_update(
            &mut p.data,
            &g.data,
            &mut state.m[i],
            &mut state.v[i],
            t,
            cfg,
        );
    }
    Ok(())
}

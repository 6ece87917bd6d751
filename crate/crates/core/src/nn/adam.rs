use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one flat parameter buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self::with_config(len, AdamConfig::default())
    }

    pub fn with_config(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient entry is non-finite.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("adam_step", params.len(), grads.len()));
    }
    if state.m.len() != params.len() {
        return Err(Error::dim("adam_step state", params.len(), state.m.len()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("adam_step gradient"));
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let step = lr / (1.0 - libm::pow(beta1, t as f64));
    let v_corr = 1.0 / (1.0 - libm::pow(beta2, t as f64));
    let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
    let (step, v_corr, eps) = (T::from_f64(step), T::from_f64(v_corr), T::from_f64(eps));
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        *p -= step * *m / ((*v * v_corr).sqrt() + eps);
    }
    Ok(())
}

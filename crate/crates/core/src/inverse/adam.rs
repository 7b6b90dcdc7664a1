use serde::{Deserialize, Serialize};

use super::EstimateOptions;
use crate::error::{Error, Result};
use crate::materials::SigmaVector;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(k: usize) -> Self {
        AdamState { m: vec![0.0; k], v: vec![0.0; k], t: 0 }
    }
}

/// One bias-corrected Adam step, clamped to the option bounds.
pub fn adam_step(sigma: &SigmaVector, state: &mut AdamState, grad: &[f64], options: &EstimateOptions) -> Result<SigmaVector> {
    let k = sigma.len();
    if state.m.len() != k || state.v.len() != k {
        return Err(Error::Dimension { expected: k, got: state.m.len() });
    }
    if grad.len() != k {
        return Err(Error::Dimension { expected: k, got: grad.len() });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - options.beta1.powi(t);
    let c2 = 1.0 - options.beta2.powi(t);
    let next = sigma
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let g = grad[i];
            state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * g;
            state.v[i] = options.beta2 * state.v[i] + (1.0 - options.beta2) * g * g;
            let m_hat = state.m[i] / c1;
            let v_hat = state.v[i] / c2;
            let s = s - options.lr * m_hat / (v_hat.sqrt() + options.adam_eps);
            if s.is_nan() {
                options.sigma_min
            } else {
                s.clamp(options.sigma_min, options.sigma_max)
            }
        })
        .collect();
    Ok(SigmaVector::clamped(next))
}

//! Adaptive-moment parameter updates.

use super::tensor::Tensor;
use super::{ModelParams, NeuralError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimizerState { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected update of every parameter in place.
pub fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    learning_rate: f64,
) -> Result<(), NeuralError> {
    for (name, g) in grads.tensors() {
        if !g.all_finite() {
            return Err(NeuralError::NonFiniteGradient(name.to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - BETA1.powi(t);
    let v_corr = 1.0 - BETA2.powi(t);

    for (k, ((name, p), (_, g))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .enumerate()
    {
        if p.shape() != g.shape() {
            return Err(NeuralError::ShapeMismatch(format!(
                "gradient {name} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (j, (pj, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
            let m_hat = m[j] / m_corr;
            let v_hat = v[j] / v_corr;
            *pj -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

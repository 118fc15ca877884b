//! Bias-corrected Adam optimizer over a [`ParameterSet`].

use super::{GradError, ParameterSet, Tensor};

/// Per-parameter first/second moment estimates plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with the standard defaults beta1=0.9, beta2=0.999,
    /// eps=1e-8, moments zeroed to the parameter shapes.
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        let m = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }
}

/// One Adam update. `grads` must be aligned with the parameter order (use
/// [`super::BoundParams::collect_grads`]).
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[Tensor],
    state: &mut AdamState,
) -> Result<(), GradError> {
    if grads.len() != params.len() {
        return Err(GradError::Contract(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, (name, param)) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.shape() != param.shape() {
            return Err(GradError::Contract(format!(
                "adam_step: gradient shape {:?} for parameter {name:?} of shape {:?}",
                g.shape(),
                param.shape()
            )));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = param.data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

//! Adam with bias correction and coupled L2 weight decay.
//!
//! Weight decay is added to the gradient before the moment updates, and
//! only for weight matrices (not biases, not batch-norm scale/shift).

use crate::error::Result;

use super::{Classifier, Gradients};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First/second moment accumulators matching the model's parameter layout,
/// plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &Classifier) -> AdamState {
        let sizes = model.param_sizes();
        AdamState {
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Gradient tensors must line up with
/// [`Classifier::params_mut`]; shape mismatches are configuration errors.
pub fn adam_step(
    model: &mut Classifier,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    let grad_slices = grads.param_slices();
    let mut params = model.params_mut();
    if grad_slices.len() != params.len() || grad_slices.len() != state.first.len() {
        return Err(crate::error::Error::Config(
            "optimizer state does not match the model's parameter layout".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);

    for (idx, param) in params.iter_mut().enumerate() {
        let grad = grad_slices[idx];
        if grad.len() != param.values.len() {
            return Err(crate::error::Error::Config(format!(
                "gradient for {} has length {}, parameter has {}",
                param.name,
                grad.len(),
                param.values.len()
            )));
        }
        let m = &mut state.first[idx];
        let v = &mut state.second[idx];
        for i in 0..grad.len() {
            let mut g = grad[i];
            if param.decays {
                g += weight_decay * param.values[i];
            }
            adam_update_value(
                &mut m[i],
                &mut v[i],
                bias1,
                bias2,
                &mut param.values[i],
                g,
                learning_rate,
            );
        }
    }
    Ok(())
}

/// The per-value Adam rule shared by [`adam_step`]; `bias1`/`bias2` are the
/// step-`t` bias corrections `1 - beta^t`.
pub(crate) fn adam_update_value(
    m: &mut f64,
    v: &mut f64,
    bias1: f64,
    bias2: f64,
    value: &mut f64,
    grad: f64,
    learning_rate: f64,
) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
    let m_hat = *m / bias1;
    let v_hat = *v / bias2;
    *value -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
}

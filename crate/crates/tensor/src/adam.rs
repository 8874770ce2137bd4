//! Adam with inverse-time learning-rate decay.
//!
//! The learning rate used for update number `t` (counting from zero) is
//! `learning_rate / (1 + decay * t)`. Bias correction is folded into the step
//! size and `eps_hat` is added to the uncorrected second-moment root.

use crate::error::TensorError;
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, decay: f64) -> Self {
        Self {
            learning_rate,
            decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Learning rate that the next update will use.
    pub fn effective_learning_rate(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * self.step as f64)
    }
}

/// One Adam update of `params` in place.
///
/// Every gradient is checked before anything is modified, so a rejected step
/// leaves both the parameters and the optimizer state untouched.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut AdamState,
) -> Result<(), TensorError> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(TensorError::BlockCount {
            expected: params.len(),
            got: grads.len(),
        });
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(TensorError::GradientShape {
                block: name.to_string(),
                param: p.shape().to_vec(),
                grad: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(TensorError::NonFiniteGradient {
                block: name.to_string(),
            });
        }
    }

    let AdamConfig {
        beta1,
        beta2,
        eps_hat,
        ..
    } = state.config;
    let lr = state.effective_learning_rate();
    let t = (state.step + 1) as f64;
    let step_size = lr * (1.0 - beta2.powf(t)).sqrt() / (1.0 - beta1.powf(t));

    for (i, g) in grads.iter().enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params.get_mut(i).data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            p[j] -= step_size * m[j] / (v[j].sqrt() + eps_hat);
        }
    }
    state.step += 1;
    Ok(())
}

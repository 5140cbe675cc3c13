//! Bias-corrected Adam.

use super::{Real, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
            config,
        }
    }
}

/// Standard bias-corrected update. Reads `param.grad` (error when absent),
/// leaves the gradient untouched; the caller zeroes grads between steps.
pub fn adam_step<T: Real>(param: &Tensor<T>, state: &mut AdamState<T>) -> Result<()> {
    let grad = param.grad().ok_or(TensorError::MissingGrad)?;
    if grad.len() != state.first_moment.len() {
        return Err(TensorError::BadLength {
            op: "adam_step",
            len: state.first_moment.len(),
            shape: param.shape().to_vec(),
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let lr = T::from_f64(state.config.learning_rate);
    let b1 = T::from_f64(state.config.beta1);
    let b2 = T::from_f64(state.config.beta2);
    let eps = T::from_f64(state.config.epsilon);
    let c1 = T::one() - T::from_f64(state.config.beta1.powi(t));
    let c2 = T::one() - T::from_f64(state.config.beta2.powi(t));
    param.with_data_mut(|data| {
        for i in 0..data.len() {
            let g = grad[i];
            let m = b1 * state.first_moment[i] + (T::one() - b1) * g;
            let v = b2 * state.second_moment[i] + (T::one() - b2) * g * g;
            state.first_moment[i] = m;
            state.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            data[i] = data[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    });
    Ok(())
}

/// Optimizer over a fixed parameter list.
pub struct Adam<T: Real> {
    params: Vec<Tensor<T>>,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: Vec<Tensor<T>>, config: AdamConfig) -> Self {
        let states = params
            .iter()
            .map(|p| AdamState::new(p.numel(), config))
            .collect();
        Adam { params, states }
    }

    /// One update on every parameter that received a gradient; parameters
    /// disconnected from the last loss are skipped, their step count frozen.
    pub fn step(&mut self) -> Result<()> {
        for (p, s) in self.params.iter().zip(self.states.iter_mut()) {
            if p.grad().is_some() {
                adam_step(p, s)?;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn states(&self) -> &[AdamState<T>] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [AdamState<T>] {
        &mut self.states
    }
}

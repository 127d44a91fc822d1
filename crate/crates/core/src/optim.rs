//! ADAM with bias correction.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
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

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held by `params`.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                params.len()
            )));
        }
        let t = self
            .step
            .checked_add(1)
            .ok_or_else(|| Error::NonFinite("adam step counter overflow".into()))?;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let tf = t as f64;
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powf(tf));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powf(tf));
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);

        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if m.shape() != p.value.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("moment {:?} vs parameter {} {:?}", m.shape(), p.name, p.value.shape()),
                ));
            }
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.step = t;
        Ok(())
    }
}

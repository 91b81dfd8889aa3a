use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epsilon: 0.01,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// Moment buffers for bias-corrected Adam, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.epsilon > 0.0) {
            return Err(Error::config("Adam learning rate and epsilon must be positive"));
        }
        let zeros = || store.iter().map(|p| vec![S::zero(); p.tensor.len()]).collect();
        Ok(Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[S] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[S] {
        &self.second[index]
    }

    /// Applies one update using each parameter's accumulated gradient; a
    /// parameter without a gradient buffer is treated as having zero gradient.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::dim("adam_step", &[store.len()], &[self.first.len()]));
        }
        for (p, m) in store.iter().zip(&self.first) {
            if p.tensor.len() != m.len() || p.tensor.grad().is_some_and(|g| g.len() != m.len()) {
                return Err(Error::dim("adam_step", p.tensor.shape(), &[m.len()]));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let (one_b1, one_b2) = (S::of(1.0 - c.beta1), S::of(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (S::of(1.0 / bc1), S::of(1.0 / bc2));
        let (lr, eps) = (S::of(c.learning_rate), S::of(c.epsilon));
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(grad) = p.tensor.grad().map(<[S]>::to_vec) else {
                // zero gradient: moments decay, parameter moves by the decayed momentum
                for ((w, mi), vi) in p.tensor.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = b1 * *mi;
                    *vi = b2 * *vi;
                    *w = *w - lr * (*mi * inv_bc1) / ((*vi * inv_bc2).sqrt() + eps);
                }
                continue;
            };
            for (((w, mi), vi), &g) in p
                .tensor
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(&grad)
            {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                *w = *w - lr * (*mi * inv_bc1) / ((*vi * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

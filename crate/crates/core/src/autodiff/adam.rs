use super::tensor::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are allocated on the first step and
/// indexed like the parameters of the store they are used with.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients held in `params`, then zeroes
    /// them. Parameters without an allocated gradient are treated as having
    /// a zero gradient. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (_, p) in params.iter() {
            if let Some(g) = p.tensor.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient(p.name.clone()));
                }
            }
        }
        if self.first.is_empty() {
            for (_, p) in params.iter() {
                self.first.push(vec![0.0; p.tensor.len()]);
                self.second.push(vec![0.0; p.tensor.len()]);
            }
        }
        assert_eq!(self.first.len(), params.len(), "optimizer bound to another store");

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in params
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let grad = p.tensor.grad().map(|g| g.to_vec());
            let values = p.tensor.values_mut();
            match grad {
                Some(g) => {
                    for i in 0..values.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                None => {
                    for i in 0..values.len() {
                        m[i] *= beta1;
                        v[i] *= beta2;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            p.tensor.zero_grad();
        }
        Ok(())
    }
}

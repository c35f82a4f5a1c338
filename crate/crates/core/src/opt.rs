//! Adam over flat f64 parameter vectors.
//!
//! Both optimization stages use the same bias-corrected update rule and
//! differ only in hyperparameters. Moment buffers are exposed so training
//! checkpoints can round-trip optimizer state exactly.

use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, dim: usize) -> Self {
        Adam { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Rebuilds an optimizer mid-run, e.g. from a checkpoint.
    pub fn restore(cfg: AdamConfig, m: Vec<f64>, v: Vec<f64>, t: u64) -> Self {
        assert_eq!(m.len(), v.len());
        Adam { cfg, m, v, t }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// (first moments, second moments), in parameter order.
    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One update: params -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
        }
    }
}

use serde::{Deserialize, Serialize};

use super::params::LstmParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam optimizer with bias-corrected moments persisted across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_parameters: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; num_parameters], v: vec![0.0; num_parameters], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }

    pub fn step(&mut self, params: &mut LstmParams, grads: &LstmParams) {
        let mut flat = params.flatten();
        self.step_flat(&mut flat, &grads.flatten());
        params.set_flat(&flat);
    }
}

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..Self::default() }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Parameters,
    v: Parameters,
    steps: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one bias-corrected Adam update. A non-finite gradient aborts
    /// the step and leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters, cfg: &AdamConfig) -> Result<()> {
        params.check_compatible(grads)?;
        if let Some(block) = grads.blocks.iter().find(|b| b.data.iter().any(|g| !g.is_finite())) {
            return Err(Error::Training(format!("non-finite gradient in block {}", block.name)));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let blocks = params.blocks.iter_mut().zip(&grads.blocks).zip(self.m.blocks.iter_mut().zip(&mut self.v.blocks));
        for ((p, g), (m, v)) in blocks {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

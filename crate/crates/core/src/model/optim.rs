use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let field_err = |name: &str, v: f64, rule: &str| {
            Err(Error::invalid(format!("{name} must be {rule}, got {v}")))
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return field_err("learning_rate", self.learning_rate, "> 0");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return field_err("beta1", self.beta1, "in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return field_err("beta2", self.beta2, "in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return field_err("epsilon", self.epsilon, "> 0");
        }
        Ok(())
    }
}

/// Adam moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimiserState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl OptimiserState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }

    /// Computes the bias-corrected Adam update for `grad` without touching
    /// `params`; returns the new `(params, m, v)` so the caller can reject a
    /// non-finite result before committing it.
    pub(crate) fn propose(&self, params: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let step = (self.step_count + 1) as i32;
        let bc1 = 1.0 - beta1.powi(step);
        let bc2 = 1.0 - beta2.powi(step);
        let n = params.len();
        let mut p = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let g = grad[i];
            let mi = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let vi = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            p.push(params[i] - learning_rate * m_hat / (v_hat.sqrt() + epsilon));
            m.push(mi);
            v.push(vi);
        }
        (p, m, v)
    }
}

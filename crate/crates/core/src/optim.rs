//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TriplaneField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for a flat parameter vector.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl Adam {
    pub fn new(n: usize) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Rejects (and leaves state untouched) on any non-finite
    /// gradient or a length mismatch.
    pub fn update<P: num_traits::Float>(&mut self, params: &mut [P], grads: &[f64], cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = cfg.beta1 * self.m[i] as f64 + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * self.v[i] as f64 + (1.0 - cfg.beta2) * g * g;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            let delta = cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.eps);
            let p = params[i].to_f64().unwrap() - delta;
            params[i] = P::from(p).unwrap();
        }
        Ok(())
    }
}

/// Adam state for a triplane field: planes and log-temperature.
#[derive(Clone, Debug)]
pub struct FieldOptimizer {
    pub config: AdamConfig,
    planes: Adam,
    temperature: Adam,
}

impl FieldOptimizer {
    pub fn new(field: &TriplaneField, config: AdamConfig) -> FieldOptimizer {
        FieldOptimizer {
            config,
            planes: Adam::new(field.param_count()),
            temperature: Adam::new(1),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.planes.step_count()
    }

    /// Updates the field and clamps its temperature. A non-finite gradient
    /// rejects the whole step.
    pub fn step(&mut self, field: &mut TriplaneField, planes: &[f64], log_temperature: f64) -> Result<()> {
        if !log_temperature.is_finite() {
            return Err(Error::NonFinite("temperature gradient".into()));
        }
        self.planes.update(&mut field.planes, planes, &self.config)?;
        let mut t = [field.log_temperature];
        self.temperature.update(&mut t, &[log_temperature], &self.config)?;
        field.log_temperature = t[0];
        field.clamp_temperature();
        Ok(())
    }
}

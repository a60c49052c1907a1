use crate::error::{Error, Result};

use super::model::ModelState;
use super::params::{GradientSet, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step counter for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    fn advance(&mut self) -> (f64, f64) {
        self.step += 1;
        let t = self.step as i32;
        (
            1.0 - self.config.beta1.powi(t),
            1.0 - self.config.beta2.powi(t),
        )
    }

    fn update_chunk(&mut self, offset: usize, params: &mut [f64], grads: &[f64], bc: (f64, f64)) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc.0;
            let v_hat = v[i] / bc.1;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    fn check(&self, len: usize, grads: &GradientSet) -> Result<()> {
        let glen: usize = grads.tensors().iter().map(|t| t.len()).sum();
        if len != self.m.len() || glen != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state of length {}, parameters {len}, gradients {glen}",
                self.m.len()
            )));
        }
        Ok(())
    }

    /// Applies one Adam step and returns the updated parameters.
    pub fn step(&mut self, params: &ParameterVector, grads: &GradientSet) -> Result<ParameterVector> {
        self.check(params.len(), grads)?;
        let mut out = params.clone();
        let bc = self.advance();
        let mut offset = 0;
        for g in grads.tensors() {
            let n = g.len();
            self.update_chunk(offset, &mut out.as_mut_slice()[offset..offset + n], g.data(), bc);
            offset += n;
        }
        Ok(out)
    }

    /// Applies one Adam step directly to the model's parameter tensors.
    pub fn apply(&mut self, model: &mut ModelState, grads: &GradientSet) -> Result<()> {
        self.check(model.param_count(), grads)?;
        let bc = self.advance();
        let mut offset = 0;
        for (p, g) in model.parameters_mut().into_iter().zip(grads.tensors()) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "gradient shape {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let n = p.len();
            self.update_chunk(offset, p.data_mut(), g.data(), bc);
            offset += n;
        }
        Ok(())
    }
}

/// Functional form of a single Adam step.
pub fn adam_step(
    params: &ParameterVector,
    grads: &GradientSet,
    state: &mut AdamState,
) -> Result<ParameterVector> {
    state.step(params, grads)
}

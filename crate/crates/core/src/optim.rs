//! Adam over any parameter set that can expose its tensors as flat slices.

use serde::{Deserialize, Serialize};

/// Exposes trainable tensors as flat slices in a fixed order.
pub(crate) trait ParamSlices {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub(crate) struct Adam<P> {
    cfg: AdamConfig,
    m: P,
    v: P,
    step: i32,
}

impl<P: ParamSlices + Clone> Adam<P> {
    /// `zeros` must have the same layout as the parameters being optimised.
    pub(crate) fn new(cfg: AdamConfig, zeros: P) -> Self {
        Self { cfg, m: zeros.clone(), v: zeros, step: 0 }
    }

    pub(crate) fn update(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let step_size = c.learning_rate / bc1;
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for k in 0..p.len() {
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
                p[k] -= step_size * m[k] / ((v[k] / bc2).sqrt() + c.eps);
            }
        }
    }
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    /// Number of completed steps.
    pub step: u64,
    moments: HashMap<String, (Vec<f32>, Vec<f32>)>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&[f32], &[f32])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Applies one AdamW update to `p` using gradient `g · clip`. Call after
    /// incrementing `step`.
    pub(crate) fn update(&mut self, name: &str, p: &mut Tensor<f32>, g: &Tensor<f32>, clip: f64, lr: f64, wd: f64) {
        let c = self.config;
        let t = self.step.max(1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (m, v) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = gi as f64 * clip;
            let mn = c.beta1 * *mi as f64 + (1.0 - c.beta1) * gi;
            let vn = c.beta2 * *vi as f64 + (1.0 - c.beta2) * gi * gi;
            *mi = mn as f32;
            *vi = vn as f32;
            if lr == 0.0 {
                continue;
            }
            let upd = (mn / bc1) / ((vn / bc2).sqrt() + c.eps) + wd * *w as f64;
            *w = (*w as f64 - lr * upd) as f32;
        }
    }
}

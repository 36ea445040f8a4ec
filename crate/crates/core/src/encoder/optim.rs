use serde::{Deserialize, Serialize};

use super::{Real, Tensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed tensor list.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new<T: Tensors<F>>(config: AdamConfig, params: &T) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, _, d)| d.len()).collect();
        Adam {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update; tensors whose `frozen` entry is true are left
    /// untouched.
    pub fn step<T: Tensors<F>>(&mut self, params: &mut T, grads: &T, frozen: &[bool]) {
        self.step += 1;
        let c = |x: f64| F::from_f64(x).unwrap();
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr_t = c(self.config.lr * bc2.sqrt() / bc1);
        let eps = c(self.config.eps * bc2.sqrt());
        let (b1f, b2f) = (c(b1), c(b2));
        let (ob1, ob2) = (c(1.0 - b1), c(1.0 - b2));
        let grads = grads.tensors();
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let g = grads[i].2;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = b1f * m[j] + ob1 * g[j];
                v[j] = b2f * v[j] + ob2 * g[j] * g[j];
                p[j] = p[j] - lr_t * m[j] / (v[j].sqrt() + eps);
            }
        }
    }
}

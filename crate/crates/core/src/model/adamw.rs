use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::float::Float;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<F: Float> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Array2<F>>,
    pub v: Vec<Array2<F>>,
}

impl<F: Float> AdamW<F> {
    pub fn new(config: AdamWConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&s| Array2::zeros(s)).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    /// One update. `decay[i]` selects which tensors receive weight decay.
    pub fn update(&mut self, params: &mut [&mut Array2<F>], grads: &[&Array2<F>], decay: &[bool], lr: f64) {
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = F::c(1.0 - c.beta1.powi(t));
        let bc2 = F::c(1.0 - c.beta2.powi(t));
        let (b1, b2) = (F::c(c.beta1), F::c(c.beta2));
        let (one, eps, lr_f) = (F::one(), F::c(c.eps), F::c(lr));
        let shrink = F::c(1.0 - lr * c.weight_decay);
        for (idx, p) in params.iter_mut().enumerate() {
            let wd = decay[idx];
            Zip::from(&mut **p)
                .and(grads[idx])
                .and(&mut self.m[idx])
                .and(&mut self.v[idx])
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    if wd {
                        *p *= shrink;
                    }
                    *p -= lr_f * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

//! Adam optimizer with bias correction.

use crate::nn::model::{Grads, Model};

pub const ADAM_LR: f64 = 1e-4;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub step: u64,
    /// first/second moments, one pair per learnable tensor (declared order)
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &Model, lr: f64) -> AdamState {
        let mut m = Vec::new();
        model.visit_params(|t| m.push(vec![0.0; t.len()]));
        let v = m.clone();
        AdamState { lr, step: 0, m, v }
    }

    /// One bias-corrected update over all tensors.
    pub fn apply(&mut self, model: &mut Model, grads: &Grads) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let lr = self.lr;
        let mut idx = 0;
        let m = &mut self.m;
        let v = &mut self.v;
        model.visit_params_mut(|p| {
            let g = &grads.tensors[idx];
            let mt = &mut m[idx];
            let vt = &mut v[idx];
            for i in 0..p.len() {
                mt[i] = ADAM_BETA1 * mt[i] + (1.0 - ADAM_BETA1) * g[i];
                vt[i] = ADAM_BETA2 * vt[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = mt[i] / bc1;
                let v_hat = vt[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            idx += 1;
        });
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam over a fixed ordered list of parameter slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn param_count(&self) -> usize {
        self.first.len()
    }

    /// One update. `params` and `grads` must list slices in the same order
    /// and shapes every call. Non-finite gradients abort before any write.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                context: "adam parameter groups",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        let total: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.first.len() {
            return Err(Error::DimensionMismatch {
                context: "adam state",
                expected: self.first.len(),
                actual: total,
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    context: "adam slice",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient at Adam step {}", self.step + 1)));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            let m = &mut self.first[offset..offset + g.len()];
            let v = &mut self.second[offset..offset + g.len()];
            for (((w, gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += g.len();
        }
        Ok(())
    }
}

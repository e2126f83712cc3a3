//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.999);
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Moment accumulators are allocated on the first step and must keep the
/// same parameter count and shapes for the optimizer's lifetime.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    slots: Vec<Slot>,
    step_count: u64,
}

impl Adam {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self {
            lr,
            betas,
            eps,
            slots: Vec::new(),
            step_count: 0,
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_LR, DEFAULT_BETAS, DEFAULT_EPS)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over all parameters. `grads[i]` must match `params[i]` in length.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::contract(format!(
                "adam: {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                })
                .collect();
        }
        if self.slots.len() != params.len() {
            return Err(Error::contract(format!(
                "adam: optimizer state holds {} parameters, update has {}",
                self.slots.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(self.step_count as i32);
        let bc2 = 1.0 - b2.powi(self.step_count as i32);
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            if p.len() != g.len() || p.len() != slot.m.len() {
                return Err(Error::contract(format!(
                    "adam: parameter/gradient/state length mismatch ({}, {}, {})",
                    p.len(),
                    g.len(),
                    slot.m.len()
                )));
            }
            for (i, value) in p.data_mut().iter_mut().enumerate() {
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g[i];
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                *value -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

//! Adam with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state: first/second moment accumulators mirroring the parameter
/// list shape-for-shape, and the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// State sized for every trainable parameter of `net`, in declaration order.
    pub fn for_network(net: &Network, lr: f64) -> Self {
        let shapes: Vec<usize> = net.params().map(|p| p.len()).collect();
        Self::new(lr, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over `params`, reading each tensor's gradient slot.
    /// Parameters without a populated gradient are an error.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Tensor>) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut idx = 0;
        for p in params {
            if idx >= self.m.len() {
                return Err(Error::Config("more parameters than optimizer slots".into()));
            }
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            if p.len() != m.len() {
                return Err(Error::Config(format!(
                    "parameter {idx} has {} entries, optimizer slot has {}",
                    p.len(),
                    m.len()
                )));
            }
            let grad = p
                .grad()
                .ok_or_else(|| Error::Usage(format!("parameter {idx} has no gradient")))?
                .to_vec();
            let values = p.values_mut();
            for k in 0..values.len() {
                let g = grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                values[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            idx += 1;
        }
        if idx != self.m.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, saw {idx}",
                self.m.len()
            )));
        }
        Ok(())
    }

    /// Convenience: one scalar Adam step, returning the updated value.
    /// Used by the entropy-temperature variable.
    pub fn step_scalar(&mut self, value: f64, grad: f64) -> f64 {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let m = &mut self.m[0][0];
        let v = &mut self.v[0][0];
        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
        value - self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps)
    }
}

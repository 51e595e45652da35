//! Adam with bias correction. Moment buffers are keyed by parameter
//! name so the same optimizer can serve any subset of a model's
//! parameters (a linear probe updates only its head; full fine-tuning
//! adds the encoder).

use std::collections::BTreeMap;

use super::model::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Adam {
        Adam::default()
    }

    /// Exponentially decayed learning rate: `base * decay^epoch`.
    pub fn lr_at(base: f64, decay: f64, epoch: usize) -> f64 {
        base * decay.powi(epoch as i32)
    }

    /// Apply one update to every parameter present in `grads`.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, param) in params.iter_mut() {
            let Some(grad) = grads.get(name) else { continue };
            if grad.data.len() != param.data.len() {
                return Err(Error::numeric(format!("gradient shape mismatch for {name}")));
            }
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; param.data.len()]);
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; param.data.len()]);
            for i in 0..param.data.len() {
                let g = grad.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if !param.is_finite() {
                return Err(Error::numeric(format!("parameter {name} became non-finite")));
            }
        }
        Ok(())
    }
}

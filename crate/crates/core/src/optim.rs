//! Adam with bias correction, keyed by parameter name.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every (name, gradient) pair. Parameters missing
    /// from `grads` are left untouched.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        if lr <= 0.0 {
            return Err(CoreError::invalid("adam", format!("learning rate {lr} must be positive")));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let Some(param) = params.get_mut(name) else {
                return Err(CoreError::invalid("adam", format!("gradient for unknown parameter {name:?}")));
            };
            if param.shape() != grad.shape() {
                return Err(CoreError::dims(
                    "adam",
                    format!("{name}: param {:?} vs grad {:?}", param.shape(), grad.shape()),
                ));
            }
            let n = param.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut out = param.to_vec();
            let g = grad.data();
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                out[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
            *param = Tensor::new(&grad.shape().to_vec(), out);
        }
        Ok(())
    }

    /// Serializes moment buffers as named tensors with reserved
    /// prefixes, for checkpointing alongside the parameters.
    pub fn state_dict(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        out.insert("adam.step".to_string(), Tensor::scalar(self.step as f64));
        for (k, m) in &self.m {
            out.insert(format!("adam.m.{k}"), Tensor::new(&[m.len()], m.clone()));
        }
        for (k, v) in &self.v {
            out.insert(format!("adam.v.{k}"), Tensor::new(&[v.len()], v.clone()));
        }
        out
    }

    pub fn load_state_dict(&mut self, dict: &BTreeMap<String, Tensor>) {
        if let Some(t) = dict.get("adam.step") {
            self.step = t.data()[0] as u64;
        }
        for (k, t) in dict {
            if let Some(name) = k.strip_prefix("adam.m.") {
                self.m.insert(name.to_string(), t.to_vec());
            } else if let Some(name) = k.strip_prefix("adam.v.") {
                self.v.insert(name.to_string(), t.to_vec());
            }
        }
    }
}

use std::collections::BTreeMap;

use super::{Checkpoint, Grads};
use crate::error::{invalid, Result};
use crate::Matrix;

/// Adam with decoupled weight decay, applied to every trainable parameter.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl AdamW {
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`. Gradients for frozen or unknown
    /// parameters are rejected.
    pub fn step(&mut self, ck: &mut Checkpoint, grads: &Grads, lr: f64) -> Result<()> {
        self.step += 1;
        for (name, g) in grads {
            if !ck.is_trainable(name) {
                return invalid(format!("gradient supplied for frozen parameter {name}"));
            }
            let Some(w) = ck.param_mut(name) else {
                return invalid(format!("gradient for unknown parameter {name}"));
            };
            self.apply(name, w, g, lr)?;
        }
        Ok(())
    }

    /// Updates a matrix kept outside the checkpoint with the moments of the
    /// current step; call after [`AdamW::step`].
    pub(crate) fn apply(&mut self, name: &str, w: &mut Matrix, g: &Matrix, lr: f64) -> Result<()> {
        if w.shape() != g.shape() {
            return invalid(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                g.shape(),
                w.shape()
            ));
        }
        let t = self.step.max(1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let n = g.as_slice().len();
        let m = self
            .m
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; n]);
        let v = self
            .v
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; n]);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((wi, &gi), mi), vi) in w
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *wi -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *wi);
        }
        Ok(())
    }
}

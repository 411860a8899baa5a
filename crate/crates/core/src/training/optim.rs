use crate::autograd::{Gradients, ParamStore, Tensor};
use crate::config::OptimizerConfig;
use crate::error::{Error, Result};

/// Adam with bias correction and decoupled weight decay: after the Adam
/// move each weight also shrinks by `learning_rate · l2 · θ`, outside the
/// moment estimates. Fixed rows are neither decayed nor moved.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: &OptimizerConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            l2: cfg.l2,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.first[index]
    }

    /// One update from `grads`. Parameters the loss never reached, or that
    /// do not require gradients, are left alone. A non-finite gradient
    /// aborts the step before anything changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.params() {
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for {}",
                    store.get(id).name
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(grad) = grads.param(id) else { continue };
            let p = store.get_mut(id);
            if !p.requires_grad {
                continue;
            }
            let cols = if p.value.rank() == 2 { p.value.shape()[1] } else { 0 };
            let fixed: Vec<usize> = p.fixed_rows.clone();
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            let theta = p.value.data_mut();
            for (i, ((th, gi), (mi, vi))) in theta
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                .enumerate()
            {
                if cols > 0 && fixed.contains(&(i / cols)) {
                    continue;
                }
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *th -= self.learning_rate * (mh / (vh.sqrt() + self.epsilon) + self.l2 * *th);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of every parameter gradient.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads
        .params()
        .map(|(_, g)| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for (_, g) in grads.params_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias-corrected moments, one instance per optimized network group.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub params: AdamParams,
    pub step: u64,
    pub m: Grads,
    pub v: Grads,
}

impl Adam {
    pub fn new(params: AdamParams, store: &ParamStore) -> Self {
        Adam {
            params,
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((entry, g), m), v) in store
            .entries_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m.0)
            .zip(&mut self.v.0)
        {
            for (((p, g), m), v) in entry.value.iter_mut().zip(g).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= learning_rate * mh / (vh.sqrt() + eps);
            }
        }
    }
}

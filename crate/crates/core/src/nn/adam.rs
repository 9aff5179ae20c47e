use serde::{Deserialize, Serialize};

use super::store::TensorStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: TensorStore,
    pub second_moment: TensorStore,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &TensorStore) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// Applies one update given gradients shaped like `params`.
    pub fn update(&mut self, params: &mut TensorStore, grads: &TensorStore) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id).data();
            let m = self.first_moment.get_mut(id).data_mut();
            for (m, g) in m.iter_mut().zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
            }
            let v = self.second_moment.get_mut(id).data_mut();
            for (v, g) in v.iter_mut().zip(g) {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            }
            if learning_rate == 0.0 {
                continue;
            }
            let m = self.first_moment.get(id).data();
            let v = self.second_moment.get(id).data();
            let p = params.get_mut(id).data_mut();
            for ((p, m), v) in p.iter_mut().zip(m).zip(v) {
                *p -= learning_rate * (m / c1) / ((v / c2).sqrt() + eps);
            }
        }
    }
}

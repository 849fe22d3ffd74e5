use serde::{Deserialize, Serialize};

use super::{DiffError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with one moment pair per parameter of a store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    lr_scale: Vec<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).rows(), store.get(id).cols())).collect();
        Adam { config, step: 0, lr_scale: vec![1.0; store.len()], m: zeros(), v: zeros() }
    }

    /// Per-parameter learning-rate multipliers, in store order.
    pub fn with_lr_scale(mut self, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), self.lr_scale.len(), "one multiplier per parameter");
        self.lr_scale = scale;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every gradient is checked before any parameter
    /// changes, so a non-finite gradient leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<(), DiffError> {
        if grads.len() != store.len() {
            return Err(DiffError::Shape { op: "adam", left: (store.len(), 1), right: (grads.len(), 1) });
        }
        for (id, g) in store.ids().zip(grads) {
            if g.shape() != store.get(id).shape() {
                return Err(DiffError::Shape { op: "adam", left: store.get(id).shape(), right: g.shape() });
            }
            if !g.all_finite() {
                return Err(DiffError::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[k].data();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            let lr = lr * self.lr_scale[k];
            let theta = store.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

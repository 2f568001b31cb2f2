use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::Scalar;

/// Optimiser and sampling hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub latent_dim: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_g: 1e-4,
            lr_d: 4e-4,
            beta1: 0.0,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            latent_dim: 16,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr_g > 0.0 && self.lr_g.is_finite()) {
            return Err("optim.lr_g must be > 0".into());
        }
        if !(self.lr_d > 0.0 && self.lr_d.is_finite()) {
            return Err("optim.lr_d must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err("optim.beta1 must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err("optim.beta2 must be in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err("optim.epsilon must be > 0".into());
        }
        if self.batch_size == 0 {
            return Err("optim.batch_size must be >= 1".into());
        }
        if self.latent_dim == 0 {
            return Err("optim.latent_dim must be >= 1".into());
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of every block in `store` using its
/// accumulated gradients. Increments `store.step`; the incremented value is
/// the `t` in the bias correction.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, lr: f64, cfg: &OptimConfig) {
    store.step += 1;
    let t = store.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one = T::one();
    let c1 = T::lit(1.0 - cfg.beta1.powi(t));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(lr);
    let eps = T::lit(cfg.epsilon);
    for p in store.iter_mut() {
        ndarray::Zip::from(&mut p.value)
            .and(&p.grad)
            .and(&mut p.m)
            .and(&mut p.v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            });
    }
}

use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// Adam over a [`ParamStore`]. Parameters without a gradient in a step keep
/// their moments untouched.
#[derive(Debug)]
pub struct Adam<T: Real> {
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step_with_lr(store, grads, self.cfg.lr)
    }

    pub fn step_with_lr(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &BTreeMap<String, Tensor<T>>,
        lr: f64,
    ) {
        self.step += 1;
        let norm: f64 = grads
            .values()
            .flat_map(|g| g.data().iter())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt();
        let clip = match self.cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let step_size = T::of(lr * bc2.sqrt() / bc1);
        let (b1t, b2t, eps, clip_t) = (T::of(b1), T::of(b2), T::of(self.cfg.eps), T::of(clip));
        for (name, g) in grads {
            let Some(p) = store.get_mut(name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gv = gv * clip_t;
                *mv = b1t * *mv + (T::one() - b1t) * gv;
                *vv = b2t * *vv + (T::one() - b2t) * gv * gv;
                *pv = *pv - step_size * *mv / (vv.sqrt() + eps);
            }
        }
    }
}

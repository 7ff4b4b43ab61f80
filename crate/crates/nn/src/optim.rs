//! Adam with decoupled weight decay.

use crate::params::{ParamId, ParamStore};
use crate::tape::Mat;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Option<Mat>>,
    v: Vec<Option<Mat>>,
    t: u64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every trainable parameter that has a gradient. Decay
    /// `p ← p − lr·ω·p` applies to parameters for which `decay(id)` holds,
    /// independently of the adaptive step.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Mat>], decay: impl Fn(ParamId) -> bool) {
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<ParamId> = store.trainable_ids().collect();
        for id in ids {
            let Some(g) = grads.get(id.0).and_then(|g| g.as_ref()) else {
                continue;
            };
            let m = self.m[id.0].get_or_insert_with(|| Mat::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            let v = self.v[id.0].get_or_insert_with(|| Mat::zeros(g.dim()));
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let p = store.value_mut(id);
            if decay(id) && self.weight_decay > 0.0 {
                let k = 1.0 - self.lr * self.weight_decay;
                p.mapv_inplace(|x| x * k);
            }
            let (lr, eps) = (self.lr, self.eps);
            ndarray::Zip::from(p)
                .and(self.m[id.0].as_ref().expect("set"))
                .and(self.v[id.0].as_ref().expect("set"))
                .for_each(|p, &m, &v| *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps));
        }
    }
}

pub fn global_norm(grads: &[Option<Mat>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Option<Mat>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * k);
        }
    }
    norm
}

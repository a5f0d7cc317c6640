use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients};

/// AdamW optimizer state for one network (decoupled weight decay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_net(net: &DenseNet, lr: f64, weight_decay: f64) -> Self {
        Self::new(net.param_count(), lr, weight_decay)
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update over a flat parameter vector.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), params.len(), "gradient length mismatch");
        self.step += 1;
        self.apply(0, params, grads);
    }

    /// One update of every parameter of `net`.
    pub fn update_net(&mut self, net: &mut DenseNet, grads: &Gradients) {
        assert_eq!(net.param_count(), self.m.len(), "parameter count changed");
        self.step += 1;
        let mut offset = 0;
        for (p, g) in net.params_mut().zip(grads.slices()) {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch");
            self.apply(offset, p, g);
            offset += p.len();
        }
    }

    fn apply(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        let t = self.step as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for (((w, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            *w *= decay;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// `target <- (1 - tau) target + tau online`, elementwise.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, tau: f64) {
    assert_eq!(target.sizes(), online.sizes(), "soft update between different shapes");
    for (t, o) in target.params_mut().zip(online.params()) {
        for (t, &o) in t.iter_mut().zip(o) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
}

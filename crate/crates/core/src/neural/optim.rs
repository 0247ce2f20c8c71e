use serde::{Deserialize, Serialize};

use super::params::NetworkParams;
use super::real::Real;

pub const DEFAULT_CLIP_NORM: f64 = 40.0;

/// Step-wise learning rate: `base · factor^k` where `k` counts the milestones passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<u64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base: 1e-4, milestones: vec![100_000, 300_000], factor: 0.5 }
    }
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| step >= m).count();
        self.base * self.factor.powi(passed as i32)
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut NetworkParams<T>, max_norm: f64) -> f64 {
    let norm = grads.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::lit(max_norm / norm);
        for (_, t) in grads.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: NetworkParams<T>,
    pub v: NetworkParams<T>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(like: &NetworkParams<T>) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, state: AdamState { m: like.zeros_like(), v: like.zeros_like(), t: 0 } }
    }

    /// Bias-corrected update `θ -= lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &NetworkParams<T>, lr: f64) {
        self.state.t += 1;
        let t = self.state.t as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(lr);
        let eps = T::lit(self.eps);
        let one = T::one();
        let ms = self.state.m.tensors_mut();
        let vs = self.state.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

//! One round of multi-head dot-product attention over each agent's support set
//! (itself plus its graph neighbors), followed by the output layer `f_o`.

use super::layers::{linear_backward, linear_forward, relu_backward_inplace, relu_inplace};
use super::params::NetworkParams;
use super::real::{matmul, Real};
use crate::comm_graph::CommGraph;

#[derive(Debug, Clone, Default)]
pub struct AttentionCache<T> {
    pub n: usize,
    pub heads: usize,
    pub m: Vec<T>,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// Support of each receiver, receiver first.
    pub support: Vec<Vec<usize>>,
    /// Attention weights laid out `[receiver][support slot][head]`, flattened
    /// with per-receiver offsets in `offsets`.
    pub weights: Vec<T>,
    pub offsets: Vec<usize>,
    pub concat: Vec<T>,
    pub out: Vec<T>,
}

impl<T: Real> AttentionCache<T> {
    /// Weight of sender `support[i][slot]` for receiver `i` in head `h`.
    pub fn weight(&self, i: usize, slot: usize, h: usize) -> T {
        self.weights[(self.offsets[i] + slot) * self.heads + h]
    }
}

/// `ê_i = relu(W_o concat_h(Σ_j μ^h_ij W_V^h m_j) + b_o)` for every agent.
pub fn attention_forward<T: Real>(p: &NetworkParams<T>, heads: usize, m: &[T], graph: &CommGraph) -> AttentionCache<T> {
    let n = graph.len();
    let d = p.query.shape()[0];
    let dk = d / heads;
    let scale = T::one() / T::lit(dk as f64).sqrt();
    let mut q = vec![T::zero(); n * d];
    let mut k = vec![T::zero(); n * d];
    let mut v = vec![T::zero(); n * d];
    matmul(&mut q, m, p.query.data(), n, d, d, false, true, T::zero());
    matmul(&mut k, m, p.key.data(), n, d, d, false, true, T::zero());
    matmul(&mut v, m, p.value.data(), n, d, d, false, true, T::zero());

    let support: Vec<Vec<usize>> = (0..n).map(|i| graph.support(i).collect()).collect();
    let mut offsets = Vec::with_capacity(n);
    let mut total = 0;
    for s in &support {
        offsets.push(total);
        total += s.len();
    }
    let mut weights = vec![T::zero(); total * heads];
    let mut concat = vec![T::zero(); n * d];
    let mut logits = Vec::new();
    for i in 0..n {
        let s = &support[i];
        for h in 0..heads {
            let qi = &q[i * d + h * dk..][..dk];
            logits.clear();
            logits.extend(s.iter().map(|&j| dot(qi, &k[j * d + h * dk..][..dk]) * scale));
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                z += *l;
            }
            for (slot, &j) in s.iter().enumerate() {
                let w = logits[slot] / z;
                weights[(offsets[i] + slot) * heads + h] = w;
                let vj = &v[j * d + h * dk..][..dk];
                for (c, &vv) in concat[i * d + h * dk..][..dk].iter_mut().zip(vj) {
                    *c += w * vv;
                }
            }
        }
    }
    let mut out = vec![T::zero(); n * d];
    linear_forward(&p.attn_out, &concat, n, &mut out);
    relu_inplace(&mut out);
    AttentionCache { n, heads, m: m[..n * d].to_vec(), q, k, v, support, weights, offsets, concat, out }
}

/// Backpropagates `dout` (gradient w.r.t. `ê`); accumulates parameter
/// gradients and returns the gradient w.r.t. the input messages.
pub fn attention_backward<T: Real>(p: &NetworkParams<T>, g: &mut NetworkParams<T>, c: &AttentionCache<T>, dout: &[T]) -> Vec<T> {
    let (n, heads) = (c.n, c.heads);
    let d = p.query.shape()[0];
    let dk = d / heads;
    let scale = T::one() / T::lit(dk as f64).sqrt();
    let mut dpre = dout[..n * d].to_vec();
    relu_backward_inplace(&mut dpre, &c.out);
    let mut dconcat = vec![T::zero(); n * d];
    linear_backward(&p.attn_out, &mut g.attn_out, &c.concat, &dpre, n, Some(&mut dconcat), false);

    let mut dq = vec![T::zero(); n * d];
    let mut dk_ = vec![T::zero(); n * d];
    let mut dv = vec![T::zero(); n * d];
    let mut dmu = Vec::new();
    for i in 0..n {
        let s = &c.support[i];
        for h in 0..heads {
            let doi = &dconcat[i * d + h * dk..][..dk];
            dmu.clear();
            dmu.extend(s.iter().map(|&j| dot(doi, &c.v[j * d + h * dk..][..dk])));
            let mut mean = T::zero();
            for (slot, &j) in s.iter().enumerate() {
                let w = c.weight(i, slot, h);
                mean += w * dmu[slot];
                for (a, &b) in dv[j * d + h * dk..][..dk].iter_mut().zip(doi) {
                    *a += w * b;
                }
            }
            for (slot, &j) in s.iter().enumerate() {
                let dl = c.weight(i, slot, h) * (dmu[slot] - mean) * scale;
                for t in 0..dk {
                    dq[i * d + h * dk + t] += dl * c.k[j * d + h * dk + t];
                    dk_[j * d + h * dk + t] += dl * c.q[i * d + h * dk + t];
                }
            }
        }
    }
    let mut dm = vec![T::zero(); n * d];
    for (w, gw, dx) in [(&p.query, &mut g.query, &dq), (&p.key, &mut g.key, &dk_), (&p.value, &mut g.value, &dv)] {
        matmul(gw.data_mut(), dx, &c.m, d, n, d, true, false, T::one());
        matmul(&mut dm, dx, w.data(), n, d, d, false, false, T::one());
    }
    dm
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;
use super::NeuralError;
use crate::env::{Action, OBS_CHANNELS};

/// Number of convolution layers in the observation encoder: two standalone
/// layers around three residual blocks of two layers each.
pub const CONV_LAYERS: usize = 8;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Latent width `D` of messages and recurrent states.
    pub hidden_dim: usize,
    /// Attention heads `H`; `hidden_dim` must be divisible by it.
    pub heads: usize,
    /// Field-of-view side length.
    pub fov: usize,
    /// Output channels of the eight convolution layers. Layers 0..7 feed the
    /// residual blocks and must share one width.
    pub conv_widths: Vec<usize>,
    /// Communication rounds per step (shared weights).
    pub comm_rounds: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden_dim: 256, heads: 4, fov: 9, conv_widths: vec![32, 32, 32, 32, 32, 32, 32, 16], comm_rounds: 2 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::Config(m));
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!("hidden_dim {} must be a positive multiple of heads {}", self.hidden_dim, self.heads));
        }
        if self.fov < 3 || self.fov % 2 == 0 {
            return bad(format!("fov {} must be odd and at least 3", self.fov));
        }
        if self.conv_widths.len() != CONV_LAYERS || self.conv_widths.contains(&0) {
            return bad(format!("conv_widths needs {CONV_LAYERS} positive entries"));
        }
        if self.conv_widths[..7].iter().any(|&w| w != self.conv_widths[0]) {
            return bad("conv_widths[0..7] must be equal for the residual blocks".into());
        }
        if self.comm_rounds == 0 {
            return bad("comm_rounds must be at least 1".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn fov_area(&self) -> usize {
        self.fov * self.fov
    }

    pub fn obs_len(&self) -> usize {
        OBS_CHANNELS * self.fov_area()
    }

    /// Input channels of conv layer `k`.
    pub fn conv_in(&self, k: usize) -> usize {
        if k == 0 {
            OBS_CHANNELS
        } else {
            self.conv_widths[k - 1]
        }
    }

    pub fn flat_dim(&self) -> usize {
        self.conv_widths[CONV_LAYERS - 1] * self.fov_area()
    }
}

/// Weight and bias of an affine map; weight is `[out, in...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// GRU weights: gate rows ordered (update z, reset r, candidate n).
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    /// `[3D, in]`
    pub w_input: Tensor<T>,
    /// `[3D, D]`
    pub w_hidden: Tensor<T>,
    /// `[3D]`
    pub bias: Tensor<T>,
}

/// All trainable weights: encoder, communication block and dueling head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub conv: Vec<Dense<T>>,
    pub encoder_fc: Dense<T>,
    pub encoder_gru: GruParams<T>,
    /// `[D, D]`; head `h` owns rows `h*d_k..(h+1)*d_k`.
    pub query: Tensor<T>,
    pub key: Tensor<T>,
    pub value: Tensor<T>,
    pub attn_out: Dense<T>,
    pub comm_gru: GruParams<T>,
    pub value_head: Dense<T>,
    pub advantage_head: Dense<T>,
}

fn dense<T: Real>(out: usize, inp: &[usize]) -> Dense<T> {
    let mut shape = vec![out];
    shape.extend_from_slice(inp);
    Dense { weight: Tensor::zeros(&shape), bias: Tensor::zeros(&[out]) }
}

fn gru<T: Real>(input: usize, hidden: usize) -> GruParams<T> {
    GruParams {
        w_input: Tensor::zeros(&[3 * hidden, input]),
        w_hidden: Tensor::zeros(&[3 * hidden, hidden]),
        bias: Tensor::zeros(&[3 * hidden]),
    }
}

impl<T: Real> NetworkParams<T> {
    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let d = cfg.hidden_dim;
        let conv = (0..CONV_LAYERS).map(|k| dense(cfg.conv_widths[k], &[cfg.conv_in(k), 3, 3])).collect();
        NetworkParams {
            conv,
            encoder_fc: dense(d, &[cfg.flat_dim()]),
            encoder_gru: gru(d, d),
            query: Tensor::zeros(&[d, d]),
            key: Tensor::zeros(&[d, d]),
            value: Tensor::zeros(&[d, d]),
            attn_out: dense(d, &[d]),
            comm_gru: gru(d, d),
            value_head: dense(1, &[d]),
            advantage_head: dense(Action::COUNT, &[d]),
        }
    }

    /// He-uniform conv/affine weights, orthogonal recurrent blocks, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let d = cfg.hidden_dim;
        for layer in &mut p.conv {
            he_uniform(&mut layer.weight, rng);
        }
        he_uniform(&mut p.encoder_fc.weight, rng);
        for g in [&mut p.encoder_gru, &mut p.comm_gru] {
            he_uniform(&mut g.w_input, rng);
            for gate in 0..3 {
                let block = orthogonal(d, rng);
                g.w_hidden.data_mut()[gate * d * d..(gate + 1) * d * d]
                    .iter_mut()
                    .zip(block)
                    .for_each(|(w, v)| *w = T::lit(v));
            }
        }
        for t in [&mut p.query, &mut p.key, &mut p.value] {
            he_uniform(t, rng);
        }
        he_uniform(&mut p.attn_out.weight, rng);
        he_uniform(&mut p.value_head.weight, rng);
        he_uniform(&mut p.advantage_head.weight, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, t)| t.fill(T::zero()));
        z
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v: Vec<(String, &Tensor<T>)> = Vec::new();
        for (k, c) in self.conv.iter().enumerate() {
            v.push((format!("encoder.conv{k}.weight"), &c.weight));
            v.push((format!("encoder.conv{k}.bias"), &c.bias));
        }
        v.push(("encoder.fc.weight".into(), &self.encoder_fc.weight));
        v.push(("encoder.fc.bias".into(), &self.encoder_fc.bias));
        push_gru(&mut v, "encoder.gru", &self.encoder_gru);
        v.push(("comm.query".into(), &self.query));
        v.push(("comm.key".into(), &self.key));
        v.push(("comm.value".into(), &self.value));
        v.push(("comm.out.weight".into(), &self.attn_out.weight));
        v.push(("comm.out.bias".into(), &self.attn_out.bias));
        push_gru(&mut v, "comm.gru", &self.comm_gru);
        v.push(("head.value.weight".into(), &self.value_head.weight));
        v.push(("head.value.bias".into(), &self.value_head.bias));
        v.push(("head.advantage.weight".into(), &self.advantage_head.weight));
        v.push(("head.advantage.bias".into(), &self.advantage_head.bias));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v: Vec<(String, &mut Tensor<T>)> = Vec::new();
        for (k, c) in self.conv.iter_mut().enumerate() {
            v.push((format!("encoder.conv{k}.weight"), &mut c.weight));
            v.push((format!("encoder.conv{k}.bias"), &mut c.bias));
        }
        v.push(("encoder.fc.weight".into(), &mut self.encoder_fc.weight));
        v.push(("encoder.fc.bias".into(), &mut self.encoder_fc.bias));
        push_gru_mut(&mut v, "encoder.gru", &mut self.encoder_gru);
        v.push(("comm.query".into(), &mut self.query));
        v.push(("comm.key".into(), &mut self.key));
        v.push(("comm.value".into(), &mut self.value));
        v.push(("comm.out.weight".into(), &mut self.attn_out.weight));
        v.push(("comm.out.bias".into(), &mut self.attn_out.bias));
        push_gru_mut(&mut v, "comm.gru", &mut self.comm_gru);
        v.push(("head.value.weight".into(), &mut self.value_head.weight));
        v.push(("head.value.bias".into(), &mut self.value_head.bias));
        v.push(("head.advantage.weight".into(), &mut self.advantage_head.weight));
        v.push(("head.advantage.bias".into(), &mut self.advantage_head.bias));
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let c = |t: &Tensor<T>| t.cast::<U>();
        let cd = |d: &Dense<T>| Dense { weight: c(&d.weight), bias: c(&d.bias) };
        let cg = |g: &GruParams<T>| GruParams { w_input: c(&g.w_input), w_hidden: c(&g.w_hidden), bias: c(&g.bias) };
        NetworkParams {
            conv: self.conv.iter().map(cd).collect(),
            encoder_fc: cd(&self.encoder_fc),
            encoder_gru: cg(&self.encoder_gru),
            query: c(&self.query),
            key: c(&self.key),
            value: c(&self.value),
            attn_out: cd(&self.attn_out),
            comm_gru: cg(&self.comm_gru),
            value_head: cd(&self.value_head),
            advantage_head: cd(&self.advantage_head),
        }
    }

    /// Checks every tensor against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &NetworkConfig) -> Result<(), NeuralError> {
        let expect = Self::zeros(cfg);
        let ours = self.tensors();
        let theirs = expect.tensors();
        if ours.len() != theirs.len() {
            return Err(NeuralError::Config(format!("expected {} tensors, found {}", theirs.len(), ours.len())));
        }
        for ((name, t), (_, e)) in ours.iter().zip(&theirs) {
            if t.shape() != e.shape() {
                return Err(NeuralError::Config(format!("{name}: shape {:?}, expected {:?}", t.shape(), e.shape())));
            }
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }
}

fn push_gru<'a, T>(v: &mut Vec<(String, &'a Tensor<T>)>, prefix: &str, g: &'a GruParams<T>) {
    v.push((format!("{prefix}.w_input"), &g.w_input));
    v.push((format!("{prefix}.w_hidden"), &g.w_hidden));
    v.push((format!("{prefix}.bias"), &g.bias));
}

fn push_gru_mut<'a, T>(v: &mut Vec<(String, &'a mut Tensor<T>)>, prefix: &str, g: &'a mut GruParams<T>) {
    v.push((format!("{prefix}.w_input"), &mut g.w_input));
    v.push((format!("{prefix}.w_hidden"), &mut g.w_hidden));
    v.push((format!("{prefix}.bias"), &mut g.bias));
}

fn he_uniform<T: Real, R: Rng + ?Sized>(t: &mut Tensor<T>, rng: &mut R) {
    let fan_in: usize = t.shape()[1..].iter().product();
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    for v in t.data_mut() {
        *v = T::lit(dist.sample(rng));
    }
}

/// Random `n x n` orthogonal matrix (row-major) via Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= dot * m[j * n + k];
                }
            }
            let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

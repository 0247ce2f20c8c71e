//! Full agent network: convolutional encoder, encoder GRU, communication
//! rounds and dueling head, unrolled over a sequence of steps.

use rand::Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache};
use super::layers::{
    conv_backward, conv_forward, gru_backward, gru_forward, linear_backward, linear_forward, relu_backward_inplace, relu_inplace,
    ConvGeometry, GruCache,
};
use super::params::{NetworkConfig, NetworkParams, CONV_LAYERS};
use super::real::Real;
use super::NeuralError;
use crate::comm_graph::CommGraph;
use crate::env::{Action, OBS_CHANNELS};

/// Conv layers whose output is added to the block input before activation.
fn closes_residual_block(k: usize) -> bool {
    matches!(k, 2 | 4 | 6)
}

/// A network configuration together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub params: NetworkParams<T>,
}

/// Inputs for an unrolled pass over `graphs.len()` consecutive steps of one episode.
#[derive(Debug, Clone, Copy)]
pub struct SequenceInput<'a, T> {
    pub agents: usize,
    /// `steps x agents x (6·ℓ·ℓ)`, each observation channel-major.
    pub obs: &'a [T],
    pub graphs: &'a [CommGraph],
    /// Recurrent state entering the first step, `agents x D`.
    pub hidden: &'a [T],
}

#[derive(Debug, Clone)]
pub struct SequenceOutput<T> {
    /// `steps x agents x 5`.
    pub q: Vec<T>,
    /// Recurrent state after the last step, `agents x D`.
    pub hidden: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    /// `agents x 5`.
    pub q: Vec<T>,
    pub hidden: Vec<T>,
}

#[derive(Debug, Clone)]
struct StepCache<T> {
    encoder: GruCache<T>,
    rounds: Vec<(AttentionCache<T>, GruCache<T>)>,
    last: Vec<T>,
}

/// Intermediates recorded by [`Network::forward_sequence`] for the backward pass.
#[derive(Debug, Clone)]
pub struct SequenceCache<T> {
    agents: usize,
    steps: usize,
    /// `acts[k]` is the input of conv layer `k`; `acts[8]` the encoder output.
    acts: Vec<Vec<T>>,
    flat: Vec<T>,
    step_caches: Vec<StepCache<T>>,
}

impl<T: Real> Network<T> {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self, NeuralError> {
        config.validate()?;
        let params = NetworkParams::init(&config, rng);
        Ok(Network { config, params })
    }

    pub fn from_params(config: NetworkConfig, params: NetworkParams<T>) -> Result<Self, NeuralError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Network { config, params })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn zero_hidden(&self, agents: usize) -> Vec<T> {
        vec![T::zero(); agents * self.config.hidden_dim]
    }

    /// One decision step for all agents.
    pub fn step(&self, agents: usize, obs: &[T], graph: &CommGraph, hidden: &[T]) -> StepOutput<T> {
        let input = SequenceInput { agents, obs, graphs: std::slice::from_ref(graph), hidden };
        let (out, _) = self.forward_sequence(&input);
        StepOutput { q: out.q, hidden: out.hidden }
    }

    /// Convolutional stack and flatten-projection for every frame.
    fn encode_frames(&self, obs: &[T], frames: usize) -> (Vec<Vec<T>>, Vec<T>, Vec<T>) {
        let cfg = &self.config;
        let area = cfg.fov_area();
        let g = ConvGeometry { side: cfg.fov, frames };
        let obs_len = cfg.obs_len();
        assert_eq!(obs.len(), frames * obs_len, "observation buffer has wrong length");
        let mut x0 = vec![T::zero(); OBS_CHANNELS * frames * area];
        for f in 0..frames {
            for c in 0..OBS_CHANNELS {
                x0[c * frames * area + f * area..][..area].copy_from_slice(&obs[f * obs_len + c * area..][..area]);
            }
        }
        let mut acts = Vec::with_capacity(CONV_LAYERS + 1);
        acts.push(x0);
        for k in 0..CONV_LAYERS {
            let mut out = vec![T::zero(); cfg.conv_widths[k] * g.columns()];
            conv_forward(&self.params.conv[k], &acts[k], g, &mut out);
            if closes_residual_block(k) {
                for (o, &r) in out.iter_mut().zip(&acts[k - 1]) {
                    *o += r;
                }
            }
            relu_inplace(&mut out);
            acts.push(out);
        }
        let last = &acts[CONV_LAYERS];
        let cl = cfg.conv_widths[CONV_LAYERS - 1];
        let flat_dim = cfg.flat_dim();
        let mut flat = vec![T::zero(); frames * flat_dim];
        for f in 0..frames {
            for c in 0..cl {
                flat[f * flat_dim + c * area..][..area].copy_from_slice(&last[c * frames * area + f * area..][..area]);
            }
        }
        let mut o_hat = vec![T::zero(); frames * cfg.hidden_dim];
        linear_forward(&self.params.encoder_fc, &flat, frames, &mut o_hat);
        (acts, flat, o_hat)
    }

    /// Unrolls the network over a sequence, recording what the backward pass needs.
    pub fn forward_sequence(&self, input: &SequenceInput<'_, T>) -> (SequenceOutput<T>, SequenceCache<T>) {
        let n = input.agents;
        let steps = input.graphs.len();
        let d = self.config.hidden_dim;
        let (acts, flat, o_hat) = self.encode_frames(input.obs, steps * n);
        let p = &self.params;
        let mut h = input.hidden[..n * d].to_vec();
        let mut q = Vec::with_capacity(steps * n * Action::COUNT);
        let mut step_caches = Vec::with_capacity(steps);
        for (t, graph) in input.graphs.iter().enumerate() {
            assert_eq!(graph.len(), n, "graph size differs from agent count");
            let mut encoder = GruCache::default();
            let mut m = vec![T::zero(); n * d];
            gru_forward(&p.encoder_gru, &o_hat[t * n * d..][..n * d], &h, n, &mut m, Some(&mut encoder));
            let mut rounds = Vec::with_capacity(self.config.comm_rounds);
            for _ in 0..self.config.comm_rounds {
                let att = attention_forward(p, self.config.heads, &m, graph);
                let mut gc = GruCache::default();
                let mut next = vec![T::zero(); n * d];
                gru_forward(&p.comm_gru, &att.out, &m, n, &mut next, Some(&mut gc));
                rounds.push((att, gc));
                m = next;
            }
            q.extend(self.q_values(&m, n));
            h = m.clone();
            step_caches.push(StepCache { encoder, rounds, last: m });
        }
        let cache = SequenceCache { agents: n, steps, acts, flat, step_caches };
        (SequenceOutput { q, hidden: h }, cache)
    }

    fn q_values(&self, e: &[T], n: usize) -> Vec<T> {
        let mut v = vec![T::zero(); n];
        let mut a = vec![T::zero(); n * Action::COUNT];
        linear_forward(&self.params.value_head, e, n, &mut v);
        linear_forward(&self.params.advantage_head, e, n, &mut a);
        let mut q = Vec::with_capacity(n * Action::COUNT);
        for i in 0..n {
            q.extend(super::loss::dueling(v[i], &a[i * Action::COUNT..][..Action::COUNT]));
        }
        q
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the sequence's Q-values is `dq` (`steps x agents x 5`).
    pub fn backward_sequence(&self, cache: &SequenceCache<T>, dq: &[T], grads: &mut NetworkParams<T>) {
        let cfg = &self.config;
        let p = &self.params;
        let (n, steps, d) = (cache.agents, cache.steps, cfg.hidden_dim);
        let na = Action::COUNT;
        assert_eq!(dq.len(), steps * n * na);
        let mut d_o_hat = vec![T::zero(); steps * n * d];
        let mut dh_next = vec![T::zero(); n * d];
        let inv = T::one() / T::lit(na as f64);
        for t in (0..steps).rev() {
            let sc = &cache.step_caches[t];
            let dq_t = &dq[t * n * na..][..n * na];
            let mut dv = vec![T::zero(); n];
            let mut da = vec![T::zero(); n * na];
            for i in 0..n {
                let row = &dq_t[i * na..][..na];
                let s: T = row.iter().copied().sum();
                dv[i] = s;
                for a in 0..na {
                    da[i * na + a] = row[a] - s * inv;
                }
            }
            let mut de = dh_next.clone();
            linear_backward(&p.value_head, &mut grads.value_head, &sc.last, &dv, n, Some(&mut de), true);
            linear_backward(&p.advantage_head, &mut grads.advantage_head, &sc.last, &da, n, Some(&mut de), true);
            for (att, gc) in sc.rounds.iter().rev() {
                let (dx, mut dm) = gru_backward(&p.comm_gru, &mut grads.comm_gru, gc, &de);
                let dm_att = attention_backward(p, grads, att, &dx);
                for (a, b) in dm.iter_mut().zip(&dm_att) {
                    *a += *b;
                }
                de = dm;
            }
            let (dx, dh) = gru_backward(&p.encoder_gru, &mut grads.encoder_gru, &sc.encoder, &de);
            d_o_hat[t * n * d..][..n * d].copy_from_slice(&dx);
            dh_next = dh;
        }

        let frames = steps * n;
        let area = cfg.fov_area();
        let flat_dim = cfg.flat_dim();
        let mut dflat = vec![T::zero(); frames * flat_dim];
        linear_backward(&p.encoder_fc, &mut grads.encoder_fc, &cache.flat, &d_o_hat, frames, Some(&mut dflat), false);
        let cl = cfg.conv_widths[CONV_LAYERS - 1];
        let mut dlast = vec![T::zero(); cl * frames * area];
        for f in 0..frames {
            for c in 0..cl {
                dlast[c * frames * area + f * area..][..area].copy_from_slice(&dflat[f * flat_dim + c * area..][..area]);
            }
        }
        let g = ConvGeometry { side: cfg.fov, frames };
        let mut dacts: Vec<Option<Vec<T>>> = vec![None; CONV_LAYERS + 1];
        dacts[CONV_LAYERS] = Some(dlast);
        for k in (0..CONV_LAYERS).rev() {
            let mut dpre = dacts[k + 1].take().expect("gradient of conv output");
            relu_backward_inplace(&mut dpre, &cache.acts[k + 1]);
            if closes_residual_block(k) {
                add_into(&mut dacts[k - 1], &dpre);
            }
            if let Some(din) = conv_backward(&p.conv[k], &mut grads.conv[k], &cache.acts[k], &dpre, g, k > 0) {
                add_into(&mut dacts[k], &din);
            }
        }
    }
}

fn add_into<T: Real>(slot: &mut Option<Vec<T>>, v: &[T]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(v).for_each(|(a, &b)| *a += b),
        None => *slot = Some(v.to_vec()),
    }
}

/// Index of the largest Q-value, lowest index on ties.
pub fn greedy_action<T: Real>(q: &[T]) -> Action {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("five actions")
}

use crate::comm_graph::{build_graph, CommGraph};
use crate::neural::{clip_grad_norm, huber, huber_grad, n_step_target, Adam, Bootstrap, Network, SequenceInput};
use crate::replay::Sampled;

use super::config::{HiddenInit, TrainConfig};
use super::episode::SequenceRef;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    /// Importance-weighted mean Huber loss.
    pub loss: f64,
    pub grad_norm: f64,
    /// New raw priority per sample (`0.9·max + 0.1·mean` of `|δ|`).
    pub td_priorities: Vec<f64>,
    /// The batch produced non-finite values and was not applied.
    pub skipped: bool,
}

/// Online and target networks with their optimizer.
#[derive(Debug, Clone)]
pub struct Learner {
    pub online: Network<f32>,
    pub target: Network<f32>,
    pub adam: Adam<f32>,
    pub step: u64,
}

fn to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.iter().map(|&b| f32::from(b)).collect()
}

impl Learner {
    pub fn new(online: Network<f32>) -> Self {
        let target = online.clone();
        let adam = Adam::new(&online.params);
        Learner { online, target, adam, step: 0 }
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Stacks the sequences as disjoint agent blocks of one unrolled pass.
    /// Window `b` covers states `from[b]..to[b]`; shorter windows repeat their
    /// last state, which cannot influence earlier outputs.
    fn stacked_input(seqs: &[&SequenceRef], from: &[usize], to: &[usize], fov: usize) -> (Vec<f32>, Vec<CommGraph>) {
        let steps = (0..seqs.len()).map(|b| to[b] - from[b]).max().unwrap_or(0);
        let total: usize = seqs.iter().map(|s| s.episode.agents).sum();
        let obs_len = seqs.first().map_or(0, |s| s.episode.obs_len);
        let mut obs = Vec::with_capacity(steps * total * obs_len);
        let mut graphs = Vec::with_capacity(steps);
        for k in 0..steps {
            let mut neighbors = Vec::with_capacity(total);
            for (b, seq) in seqs.iter().enumerate() {
                let state = (from[b] + k).min(to[b] - 1);
                obs.extend(to_f32(seq.episode.obs_at(state)));
                let offset = neighbors.len();
                let g = build_graph(seq.episode.positions_at(state), fov);
                neighbors.extend((0..g.len()).map(|i| g.neighbors(i).iter().map(|&j| j + offset).collect::<Vec<_>>()));
            }
            graphs.push(CommGraph::from_neighbors(neighbors));
        }
        (obs, graphs)
    }

    /// One optimization step on a sampled batch.
    pub fn train_batch(&mut self, cfg: &TrainConfig, batch: &[Sampled<SequenceRef>]) -> BatchStats {
        let bsz = batch.len();
        let fov = cfg.network.fov;
        let seqs: Vec<&SequenceRef> = batch.iter().map(|s| &s.item).collect();
        let mut offsets = Vec::with_capacity(bsz);
        let mut total = 0;
        let mut h0: Vec<f32> = Vec::new();
        for s in &seqs {
            offsets.push(total);
            total += s.episode.agents;
            match cfg.hidden_init {
                HiddenInit::Stored => h0.extend_from_slice(s.stored_hidden()),
                HiddenInit::Zero => h0.extend(self.online.zero_hidden(s.episode.agents)),
            }
        }
        let starts: Vec<usize> = seqs.iter().map(|s| s.start).collect();

        // Target pass over each window plus its bootstrap horizon.
        let t_ends: Vec<usize> = seqs
            .iter()
            .map(|s| {
                let last_state = if s.episode.terminal { s.episode.steps() - 1 } else { s.episode.steps() };
                (s.start + s.len - 1 + cfg.n_step).min(last_state) + 1
            })
            .collect();
        let (t_obs, t_graphs) = Self::stacked_input(&seqs, &starts, &t_ends, fov);
        let (t_out, _) = self.target.forward_sequence(&SequenceInput { agents: total, obs: &t_obs, graphs: &t_graphs, hidden: &h0 });

        let o_ends: Vec<usize> = seqs.iter().map(|s| s.start + s.len).collect();
        let (o_obs, o_graphs) = Self::stacked_input(&seqs, &starts, &o_ends, fov);
        let (out, cache) = self.online.forward_sequence(&SequenceInput { agents: total, obs: &o_obs, graphs: &o_graphs, hidden: &h0 });

        let b = bsz as f64;
        let mut dq = vec![0.0f32; out.q.len()];
        let mut loss = 0.0;
        let mut td_priorities = Vec::with_capacity(bsz);
        for (bi, (s, seq)) in batch.iter().zip(&seqs).enumerate() {
            let ep = &seq.episode;
            let steps = ep.steps();
            let col = offsets[bi] + ep.focal;
            let bootstrap_value = |state: usize| -> f64 {
                let q = &t_out.q[((state - seq.start) * total + col) * 5..][..5];
                match cfg.bootstrap {
                    Bootstrap::OnTrajectory if state < steps => f64::from(q[ep.actions[state].index()]),
                    _ => f64::from(q.iter().copied().fold(f32::NEG_INFINITY, f32::max)),
                }
            };
            let scale = s.weight / b / seq.len as f64;
            let mut seq_loss = 0.0;
            let mut abs_td = Vec::with_capacity(seq.len);
            for k in 0..seq.len {
                let t = seq.start + k;
                let end = (t + cfg.n_step).min(steps);
                let boot = if end == steps && ep.terminal { None } else { Some(bootstrap_value(end)) };
                let target = n_step_target(&ep.rewards[t..end], cfg.gamma, boot);
                let idx = (k * total + col) * 5 + ep.actions[t].index();
                let delta = target - f64::from(out.q[idx]);
                seq_loss += huber(delta) / seq.len as f64;
                abs_td.push(delta.abs());
                dq[idx] = (-huber_grad(delta) * scale) as f32;
            }
            loss += s.weight * seq_loss / b;
            td_priorities.push(crate::replay::sequence_priority(&abs_td));
        }
        let mut grads = self.online.params.zeros_like();
        self.online.backward_sequence(&cache, &dq, &mut grads);

        let grad_norm = clip_grad_norm(&mut grads, cfg.clip_norm);
        let skipped = !loss.is_finite() || !grad_norm.is_finite();
        self.step += 1;
        if !skipped {
            let lr = cfg.lr.lr(self.step - 1);
            self.adam.step(&mut self.online.params, &grads, lr);
        }
        if self.step % cfg.target_sync_period == 0 {
            self.sync_target();
        }
        BatchStats { loss, grad_norm, td_priorities, skipped }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;

    use super::*;
    use crate::env::{generate_map, sample_instance, Action, MapfEnv};
    use crate::neural::NetworkConfig;
    use crate::rng;
    use crate::trainer::episode::{cut_sequences, EpisodeRecord};

    fn random_episode(agents: usize, steps: usize, seq_len: usize, net: &Network<f32>, seed: u64) -> Arc<EpisodeRecord> {
        let mut r = rng::stream(seed, "learner-test");
        let inst = loop {
            let map = generate_map(8, 8, 0.2, &mut r).unwrap();
            if let Ok(inst) = sample_instance(&map, agents, &mut r) {
                break inst;
            }
        };
        let fov = net.config.fov;
        let mut env = MapfEnv::new(Arc::new(inst), 256);
        let mut ep = EpisodeRecord::new(agents, net.config.obs_len(), agents - 1, seq_len);
        let mut h = net.zero_hidden(agents);
        for t in 0..=steps {
            let flat: Vec<u8> = env.observe_all(fov).iter().flat_map(|o| o.data.iter().copied()).collect();
            ep.obs.extend_from_slice(&flat);
            ep.positions.extend_from_slice(env.positions());
            if t == steps || env.is_done() {
                break;
            }
            if t % seq_len == 0 {
                ep.hidden.push(h.clone());
            }
            h = net.step(agents, &to_f32(&flat), &build_graph(env.positions(), fov), &h).hidden;
            let actions: Vec<Action> = (0..agents).map(|_| Action::ALL[r.gen_range(0..5)]).collect();
            let out = env.step(&actions).unwrap();
            ep.actions.push(actions[agents - 1]);
            ep.rewards.push(out.rewards[agents - 1]);
        }
        assert!(ep.is_consistent());
        Arc::new(ep)
    }

    #[test]
    fn stacked_pass_matches_per_sequence_passes() {
        let cfg = NetworkConfig { hidden_dim: 8, heads: 2, conv_widths: vec![3; 8], ..NetworkConfig::default() };
        let net: Network<f32> = Network::new(cfg, &mut rng::stream(5, "learner-net")).unwrap();
        let mut seqs = Vec::new();
        for (i, &(agents, steps)) in [(3, 11), (1, 6), (2, 9)].iter().enumerate() {
            seqs.extend(cut_sequences(&random_episode(agents, steps, 4, &net, i as u64)));
        }
        let refs: Vec<&SequenceRef> = seqs.iter().collect();
        let from: Vec<usize> = refs.iter().map(|s| s.start).collect();
        let to: Vec<usize> = refs.iter().map(|s| s.start + s.len).collect();
        let total: usize = refs.iter().map(|s| s.episode.agents).sum();
        let h0: Vec<f32> = refs.iter().flat_map(|s| s.stored_hidden().iter().copied()).collect();
        let (obs, graphs) = Learner::stacked_input(&refs, &from, &to, net.config.fov);
        let (stacked, _) = net.forward_sequence(&SequenceInput { agents: total, obs: &obs, graphs: &graphs, hidden: &h0 });

        let mut offset = 0;
        for (b, s) in refs.iter().enumerate() {
            let n = s.episode.agents;
            let (obs, graphs) = Learner::stacked_input(&refs[b..=b], &from[b..=b], &to[b..=b], net.config.fov);
            let (single, _) = net.forward_sequence(&SequenceInput { agents: n, obs: &obs, graphs: &graphs, hidden: s.stored_hidden() });
            for k in 0..s.len {
                for i in 0..n {
                    let a = &stacked.q[(k * total + offset + i) * 5..][..5];
                    let e = &single.q[(k * n + i) * 5..][..5];
                    for (x, y) in a.iter().zip(e) {
                        assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "window {b} step {k} agent {i}: {x} vs {y}");
                    }
                }
            }
            offset += n;
        }
    }
}

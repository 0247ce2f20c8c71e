use std::sync::{Arc, Mutex, RwLock};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{MapKind, TrainConfig};
use super::curriculum::Curriculum;
use super::episode::{cut_sequences, EpisodeRecord, SequenceRef};
use crate::comm_graph::build_graph;
use crate::env::{corridor_map, generate_map, sample_density, sample_instance, Action, EnvState, MapfEnv, ProblemInstance};
use crate::neural::{greedy_action, n_step_targets, Network};
use crate::replay::sequence_priority;
use crate::rng::Rng;

/// Single-writer, multi-reader store of immutable versioned parameter snapshots.
#[derive(Debug)]
pub struct ParamStore {
    inner: RwLock<(u64, Arc<Network<f32>>)>,
}

impl ParamStore {
    pub fn new(net: Network<f32>) -> Self {
        ParamStore { inner: RwLock::new((0, Arc::new(net))) }
    }

    pub fn with_version(version: u64, net: Network<f32>) -> Self {
        ParamStore { inner: RwLock::new((version, Arc::new(net))) }
    }

    pub fn publish(&self, net: Network<f32>) -> u64 {
        let mut g = self.inner.write().expect("param store poisoned");
        g.0 += 1;
        g.1 = Arc::new(net);
        g.0
    }

    pub fn latest(&self) -> (u64, Arc<Network<f32>>) {
        let g = self.inner.read().expect("param store poisoned");
        (g.0, Arc::clone(&g.1))
    }
}

/// Sequences of a finished episode ready for insertion, with raw priorities.
#[derive(Debug)]
pub struct FinishedEpisode {
    pub stage: (usize, usize),
    pub success: bool,
    pub steps: usize,
    pub sequences: Vec<(SequenceRef, f64)>,
}

struct Running {
    stage: (usize, usize),
    env: MapfEnv,
    record: EpisodeRecord,
    hidden: Vec<f32>,
    /// Focal-agent Q-values under the acting snapshot, one row per state.
    focal_q: Vec<[f32; 5]>,
}

/// Serializable form of an episode in progress.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningSnapshot {
    pub stage: (usize, usize),
    pub instance: ProblemInstance,
    pub state: EnvState,
    pub record: EpisodeRecord,
    pub hidden: Vec<f32>,
    pub focal_q: Vec<[f32; 5]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorSnapshot {
    pub id: usize,
    pub epsilon: f64,
    pub rng: Rng,
    pub version: u64,
    pub steps_since_refresh: u64,
    pub env_steps: u64,
    pub running: Option<RunningSnapshot>,
}

/// Generates episodes: all agents act greedily from a shared snapshot except
/// the focal agent, which explores ε-greedily.
pub struct Actor {
    pub id: usize,
    pub epsilon: f64,
    rng: Rng,
    net: Arc<Network<f32>>,
    version: u64,
    steps_since_refresh: u64,
    env_steps: u64,
    running: Option<Running>,
}

impl Actor {
    pub fn new(id: usize, epsilon: f64, rng: Rng, store: &ParamStore) -> Self {
        let (version, net) = store.latest();
        Actor { id, epsilon, rng, net, version, steps_since_refresh: 0, env_steps: 0, running: None }
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn network(&self) -> &Arc<Network<f32>> {
        &self.net
    }

    fn start_episode(&mut self, cfg: &TrainConfig, curriculum: &Mutex<Curriculum>) -> Running {
        let stage = curriculum.lock().expect("curriculum poisoned").sample(&mut self.rng);
        let (agents, size) = stage;
        let instance = loop {
            let map = match cfg.map_kind {
                MapKind::Random => {
                    let density = sample_density(&mut self.rng);
                    generate_map(size, size, density, &mut self.rng)
                }
                MapKind::Corridor => corridor_map(size, size, cfg.corridor_loop_rate, &mut self.rng),
            }
            .expect("curriculum sizes are valid map dimensions");
            if let Ok(inst) = sample_instance(&map, agents, &mut self.rng) {
                break inst;
            }
        };
        let focal = self.rng.gen_range(0..agents);
        let env = MapfEnv::new(Arc::new(instance), cfg.max_episode_len);
        let record = EpisodeRecord::new(agents, cfg.network.obs_len(), focal, cfg.seq_len);
        let hidden = self.net.zero_hidden(agents);
        Running { stage, env, record, hidden, focal_q: Vec::new() }
    }

    /// Observes the current state, runs the snapshot for all agents, records
    /// the state, and returns the Q rows.
    fn observe_and_record(&self, run: &mut Running, fov: usize) -> Vec<f32> {
        let n = run.record.agents;
        let obs = run.env.observe_all(fov);
        let mut input = Vec::with_capacity(n * run.record.obs_len);
        for o in &obs {
            run.record.obs.extend_from_slice(&o.data);
            input.extend(o.data.iter().map(|&v| f32::from(v)));
        }
        run.record.positions.extend_from_slice(run.env.positions());
        let graph = build_graph(run.env.positions(), fov);
        let out = self.net.step(n, &input, &graph, &run.hidden);
        let f = run.record.focal;
        let mut row = [0.0f32; 5];
        row.copy_from_slice(&out.q[f * 5..][..5]);
        run.focal_q.push(row);
        run.hidden = out.hidden;
        out.q
    }

    /// Advances one environment step, refreshing parameters and starting a
    /// new episode as needed. Returns the episode when this step ends it.
    pub fn env_step(&mut self, cfg: &TrainConfig, store: &ParamStore, curriculum: &Mutex<Curriculum>) -> Option<FinishedEpisode> {
        if self.steps_since_refresh >= cfg.actor_refresh_steps {
            let (v, net) = store.latest();
            self.version = v;
            self.net = net;
            self.steps_since_refresh = 0;
        }
        let fov = cfg.network.fov;
        let mut run = match self.running.take() {
            Some(r) => r,
            None => self.start_episode(cfg, curriculum),
        };
        let t = run.record.steps();
        if t % cfg.seq_len == 0 {
            run.record.hidden.push(run.hidden.clone());
        }
        let q = self.observe_and_record(&mut run, fov);
        let n = run.record.agents;
        let focal = run.record.focal;
        let actions: Vec<Action> = (0..n)
            .map(|i| {
                if i == focal && self.rng.gen::<f64>() < self.epsilon {
                    Action::from_index(self.rng.gen_range(0..Action::COUNT)).expect("valid action index")
                } else {
                    greedy_action(&q[i * 5..][..5])
                }
            })
            .collect();
        let outcome = run.env.step(&actions).expect("running episode accepts a joint action");
        run.record.actions.push(actions[focal]);
        run.record.rewards.push(outcome.rewards[focal]);
        self.env_steps += 1;
        self.steps_since_refresh += 1;
        if !outcome.all_done {
            self.running = Some(run);
            return None;
        }
        run.record.terminal = outcome.success;
        // Final state, needed for bootstrapping after a time-out.
        self.observe_and_record(&mut run, fov);
        Some(finish(run, cfg))
    }

    pub fn snapshot(&self) -> ActorSnapshot {
        ActorSnapshot {
            id: self.id,
            epsilon: self.epsilon,
            rng: self.rng.clone(),
            version: self.version,
            steps_since_refresh: self.steps_since_refresh,
            env_steps: self.env_steps,
            running: self.running.as_ref().map(|r| RunningSnapshot {
                stage: r.stage,
                instance: (**r.env.instance()).clone(),
                state: r.env.state().clone(),
                record: r.record.clone(),
                hidden: r.hidden.clone(),
                focal_q: r.focal_q.clone(),
            }),
        }
    }

    pub fn restore(s: ActorSnapshot, net: Arc<Network<f32>>, max_episode_len: usize) -> Self {
        let running = s.running.map(|r| {
            let mut env = MapfEnv::new(Arc::new(r.instance), max_episode_len);
            env.set_state(r.state);
            Running { stage: r.stage, env, record: r.record, hidden: r.hidden, focal_q: r.focal_q }
        });
        Actor {
            id: s.id,
            epsilon: s.epsilon,
            rng: s.rng,
            net,
            version: s.version,
            steps_since_refresh: s.steps_since_refresh,
            env_steps: s.env_steps,
            running,
        }
    }
}

/// Per-step absolute TD errors of the focal agent under the acting snapshot.
pub fn actor_td_errors(record: &EpisodeRecord, focal_q: &[[f32; 5]], gamma: f64, n: usize) -> Vec<f64> {
    let values: Vec<f64> = focal_q.iter().map(|q| q.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64).collect();
    let targets = n_step_targets(&record.rewards, &values, gamma, n, record.terminal);
    targets
        .iter()
        .enumerate()
        .map(|(t, &r)| (r - f64::from(focal_q[t][record.actions[t].index()])).abs())
        .collect()
}

fn finish(run: Running, cfg: &TrainConfig) -> FinishedEpisode {
    let Running { stage, record, focal_q, .. } = run;
    debug_assert!(record.is_consistent());
    let td = actor_td_errors(&record, &focal_q, cfg.gamma, cfg.n_step);
    let steps = record.steps();
    let success = record.terminal;
    let episode = Arc::new(record);
    let sequences = cut_sequences(&episode)
        .into_iter()
        .map(|s| {
            let p = sequence_priority(&td[s.start..s.start + s.len]) + cfg.replay.priority_eps;
            (s, p)
        })
        .collect();
    FinishedEpisode { stage, success, steps, sequences }
}

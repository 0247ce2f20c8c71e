use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::actor::{Actor, ActorSnapshot, FinishedEpisode, ParamStore};
use super::config::TrainConfig;
use super::curriculum::Curriculum;
use super::episode::{EpisodeRecord, SequenceRef};
use super::learner::Learner;
use super::metrics::{MetricsLog, MetricsRow};
use super::TrainError;
use crate::neural::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, Network, NetworkParams};
use crate::replay::{PrioritizedReplay, SharedReplay};
use crate::rng::{self, Rng};

pub const CHECKPOINT_FILE: &str = "checkpoint.dhc";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    Mastered,
    WallClock,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner_steps: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub skipped_batches: u64,
    pub curriculum: Curriculum,
    pub network: Network<f32>,
    pub metrics: Vec<String>,
    pub stop_reason: StopReason,
}

/// Training-state section stored in the checkpoint header.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerMeta {
    kind: String,
    architecture_hash: String,
    config: TrainConfig,
    learner_step: u64,
    adam_t: u64,
    episodes: u64,
    next_actor: usize,
    env_budget: f64,
    loss_sum: f64,
    loss_count: u64,
    skipped: u64,
    curriculum: Curriculum,
    sampler: Rng,
    store_version: u64,
    actors: Vec<ActorSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct ReplayBlob {
    episodes: Vec<EpisodeRecord>,
    buffer: PrioritizedReplay<(usize, usize, usize)>,
}

pub struct Trainer {
    cfg: TrainConfig,
    out_dir: Option<PathBuf>,
    learner: Learner,
    replay: SharedReplay<SequenceRef>,
    curriculum: Arc<Mutex<Curriculum>>,
    store: Arc<ParamStore>,
    actors: Vec<Actor>,
    sampler: Rng,
    episodes: u64,
    next_actor: usize,
    env_budget: f64,
    loss_sum: f64,
    loss_count: u64,
    skipped: u64,
    stop: Arc<AtomicBool>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, out_dir: Option<&Path>) -> Result<Self, TrainError> {
        cfg.validate()?;
        let net = Network::new(cfg.network.clone(), &mut rng::stream(cfg.seed, "init")).map_err(|e| TrainError::Config(e.to_string()))?;
        let store = Arc::new(ParamStore::new(net.clone()));
        let actors = (0..cfg.actor_count)
            .map(|i| Actor::new(i, cfg.epsilon.for_actor(i, cfg.actor_count), rng::indexed_stream(cfg.seed, "actor", i as u64), &store))
            .collect();
        Ok(Trainer {
            learner: Learner::new(net),
            replay: crate::replay::shared(cfg.replay.clone()),
            curriculum: Arc::new(Mutex::new(Curriculum::new(cfg.curriculum.clone()))),
            store,
            actors,
            sampler: rng::stream(cfg.seed, "sampler"),
            episodes: 0,
            next_actor: 0,
            env_budget: 0.0,
            loss_sum: 0.0,
            loss_count: 0,
            skipped: 0,
            stop: Arc::new(AtomicBool::new(false)),
            out_dir: out_dir.map(Path::to_path_buf),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn learner_step(&self) -> u64 {
        self.learner.step
    }

    pub fn curriculum(&self) -> Curriculum {
        self.curriculum.lock().expect("curriculum poisoned").clone()
    }

    pub fn replay_len(&self) -> usize {
        self.replay.lock().expect("replay poisoned").len()
    }

    pub fn env_steps(&self) -> u64 {
        self.actors.iter().map(Actor::env_steps).sum()
    }

    /// Setting the flag makes a running loop stop after its current step.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    fn stop_reason(&self, started: Instant) -> Option<StopReason> {
        if self.stop.load(Ordering::SeqCst) {
            return Some(StopReason::Interrupted);
        }
        if self.learner.step >= self.cfg.max_learner_steps {
            return Some(StopReason::MaxSteps);
        }
        if self.cfg.stop_when_mastered && self.curriculum.lock().expect("curriculum poisoned").is_complete() {
            return Some(StopReason::Mastered);
        }
        if self.cfg.max_wall_seconds > 0.0 && started.elapsed().as_secs_f64() >= self.cfg.max_wall_seconds {
            return Some(StopReason::WallClock);
        }
        None
    }

    fn absorb(replay: &SharedReplay<SequenceRef>, curriculum: &Mutex<Curriculum>, ep: FinishedEpisode, learner_step: u64) {
        {
            let mut r = replay.lock().expect("replay poisoned");
            for (seq, p) in ep.sequences {
                r.insert(seq, p);
            }
        }
        curriculum.lock().expect("curriculum poisoned").record(ep.stage, ep.success, learner_step);
    }

    fn actor_step(&mut self) {
        let i = self.next_actor;
        self.next_actor = (self.next_actor + 1) % self.actors.len();
        if let Some(ep) = self.actors[i].env_step(&self.cfg, &self.store, &self.curriculum) {
            self.episodes += 1;
            Self::absorb(&self.replay, &self.curriculum, ep, self.learner.step);
        }
    }

    fn mean_epsilon(&self) -> f64 {
        let n = self.cfg.actor_count as f64;
        (0..self.cfg.actor_count).map(|i| self.cfg.epsilon.for_actor(i, self.cfg.actor_count)).sum::<f64>() / n
    }

    fn train_step(&mut self, metrics: &mut MetricsLog) -> Result<(), TrainError> {
        let beta = self.cfg.beta.beta(self.learner.step);
        let batch = self.replay.lock().expect("replay poisoned").sample_batch(self.cfg.batch_size, beta, &mut self.sampler);
        let stats = self.learner.train_batch(&self.cfg, &batch);
        if stats.skipped {
            self.skipped += 1;
            eprintln!("learner step {}: non-finite loss or gradient, batch skipped", self.learner.step);
        } else {
            let ids: Vec<_> = batch.iter().map(|s| s.id).collect();
            self.replay.lock().expect("replay poisoned").update_priorities(&ids, &stats.td_priorities);
            self.loss_sum += stats.loss;
            self.loss_count += 1;
        }
        let step = self.learner.step;
        if step % self.cfg.publish_period == 0 {
            self.store.publish(self.learner.online.clone());
        }
        if step % self.cfg.metrics_period == 0 {
            self.emit_metrics(metrics)?;
        }
        if self.cfg.checkpoint_period > 0 && step % self.cfg.checkpoint_period == 0 {
            if let Some(dir) = &self.out_dir {
                self.save_checkpoint(&dir.join(CHECKPOINT_FILE))?;
            }
        }
        Ok(())
    }

    fn emit_metrics(&mut self, metrics: &mut MetricsLog) -> Result<(), TrainError> {
        let loss = if self.loss_count == 0 { f64::NAN } else { self.loss_sum / self.loss_count as f64 };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        let stages = self.curriculum().stages().to_vec();
        let buffer_size = self.replay_len();
        let lr = self.cfg.lr.lr(self.learner.step);
        let eps = self.mean_epsilon();
        for s in stages {
            metrics.push(&MetricsRow {
                step: self.learner.step,
                stage_agents: s.agents,
                stage_size: s.size,
                success_rate: s.success_rate(),
                loss,
                buffer_size,
                lr,
                eps,
            })?;
        }
        Ok(())
    }

    fn open_metrics(&self, threaded: bool) -> Result<MetricsLog, TrainError> {
        Ok(match &self.out_dir {
            None => MetricsLog::memory(),
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(METRICS_FILE);
                if threaded {
                    MetricsLog::threaded(&path)?
                } else {
                    MetricsLog::file(&path)?
                }
            }
        })
    }

    fn finish(&mut self, metrics: MetricsLog, reason: StopReason) -> Result<TrainOutcome, TrainError> {
        let lines = metrics.close()?;
        if let Some(dir) = &self.out_dir {
            self.save_checkpoint(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(TrainOutcome {
            learner_steps: self.learner.step,
            env_steps: self.env_steps(),
            episodes: self.episodes,
            skipped_batches: self.skipped,
            curriculum: self.curriculum(),
            network: self.learner.online.clone(),
            metrics: lines,
            stop_reason: reason,
        })
    }

    /// Single-threaded run: actors step round-robin, `env_steps_per_learner_step`
    /// environment steps per learner step, so a seed fixes the whole run.
    pub fn run_deterministic(&mut self) -> Result<TrainOutcome, TrainError> {
        let mut metrics = self.open_metrics(false)?;
        let started = Instant::now();
        let warmup = self.cfg.warmup_sequences.max(1);
        let ratio = if self.cfg.env_steps_per_learner_step > 0.0 { self.cfg.env_steps_per_learner_step } else { 1.0 };
        let reason = loop {
            if let Some(r) = self.stop_reason(started) {
                break r;
            }
            if self.replay_len() < warmup {
                self.actor_step();
                continue;
            }
            self.env_budget += ratio;
            while self.env_budget >= 1.0 {
                self.actor_step();
                self.env_budget -= 1.0;
            }
            self.train_step(&mut metrics)?;
        };
        self.finish(metrics, reason)
    }

    /// Actor threads plus the learner on the calling thread and a metrics writer thread.
    pub fn run_threaded(&mut self) -> Result<TrainOutcome, TrainError> {
        let mut metrics = self.open_metrics(true)?;
        let started = Instant::now();
        let warmup = self.cfg.warmup_sequences.max(1);
        let learner_steps = Arc::new(AtomicU64::new(self.learner.step));
        let learn_start_env = Arc::new(AtomicU64::new(u64::MAX));
        let env_total = Arc::new(AtomicU64::new(self.env_steps()));
        let episodes = Arc::new(AtomicU64::new(self.episodes));
        let halt = Arc::new(AtomicBool::new(false));
        let mut handles = Vec::new();
        for mut actor in std::mem::take(&mut self.actors) {
            let cfg = self.cfg.clone();
            let (store, replay, curriculum) = (Arc::clone(&self.store), Arc::clone(&self.replay), Arc::clone(&self.curriculum));
            let (learner_steps, learn_start_env, env_total, episodes, halt) =
                (Arc::clone(&learner_steps), Arc::clone(&learn_start_env), Arc::clone(&env_total), Arc::clone(&episodes), Arc::clone(&halt));
            let handle = std::thread::Builder::new().name(format!("actor-{}", actor.id)).spawn(move || {
                while !halt.load(Ordering::SeqCst) {
                    let base = learn_start_env.load(Ordering::SeqCst);
                    if cfg.env_steps_per_learner_step > 0.0 && base != u64::MAX {
                        let allowed = base as f64 + cfg.env_steps_per_learner_step * (learner_steps.load(Ordering::SeqCst) + 1) as f64;
                        if env_total.load(Ordering::SeqCst) as f64 >= allowed {
                            std::thread::sleep(Duration::from_micros(200));
                            continue;
                        }
                    }
                    let finished = actor.env_step(&cfg, &store, &curriculum);
                    env_total.fetch_add(1, Ordering::SeqCst);
                    if let Some(ep) = finished {
                        episodes.fetch_add(1, Ordering::SeqCst);
                        Self::absorb(&replay, &curriculum, ep, learner_steps.load(Ordering::SeqCst));
                    }
                }
                actor
            })?;
            handles.push(handle);
        }

        let result = (|| -> Result<StopReason, TrainError> {
            loop {
                if let Some(r) = self.stop_reason(started) {
                    return Ok(r);
                }
                if self.replay_len() < warmup {
                    std::thread::sleep(Duration::from_millis(1));
                    continue;
                }
                if learn_start_env.load(Ordering::SeqCst) == u64::MAX {
                    learn_start_env.store(env_total.load(Ordering::SeqCst), Ordering::SeqCst);
                }
                self.train_step(&mut metrics)?;
                learner_steps.store(self.learner.step, Ordering::SeqCst);
            }
        })();
        halt.store(true, Ordering::SeqCst);
        for h in handles {
            self.actors.push(h.join().map_err(|_| TrainError::Worker("actor thread panicked".into()))?);
        }
        self.actors.sort_by_key(|a| a.id);
        self.episodes = episodes.load(Ordering::SeqCst);
        let reason = result?;
        self.finish(metrics, reason)
    }

    /// Full training state: networks, optimizer, curriculum, replay, actors and RNG streams.
    pub fn to_checkpoint(&self) -> Result<Checkpoint, TrainError> {
        let (store_version, published) = self.store.latest();
        let meta = TrainerMeta {
            kind: "trainer".into(),
            architecture_hash: self.cfg.architecture_hash(),
            config: self.cfg.clone(),
            learner_step: self.learner.step,
            adam_t: self.learner.adam.state.t,
            episodes: self.episodes,
            next_actor: self.next_actor,
            env_budget: self.env_budget,
            loss_sum: self.loss_sum,
            loss_count: self.loss_count,
            skipped: self.skipped,
            curriculum: self.curriculum(),
            sampler: self.sampler.clone(),
            store_version,
            actors: self.actors.iter().map(Actor::snapshot).collect(),
        };
        let header = CheckpointHeader {
            network: self.cfg.network.clone(),
            gamma: self.cfg.gamma,
            n_step: self.cfg.n_step,
            extra: serde_json::to_value(&meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?,
        };
        let mut c = Checkpoint::new(header);
        c.push_params("", &self.learner.online.params);
        c.push_params("target.", &self.learner.target.params);
        c.push_params("adam.m.", &self.learner.adam.state.m);
        c.push_params("adam.v.", &self.learner.adam.state.v);
        c.push_params("published.", &published.params);
        for a in &self.actors {
            c.push_params(&format!("actor{}.", a.id), &a.network().params);
        }

        let replay = self.replay.lock().expect("replay poisoned");
        let mut index: HashMap<*const EpisodeRecord, usize> = HashMap::new();
        let mut episodes: Vec<EpisodeRecord> = Vec::new();
        let buffer = replay.map_items(|s| {
            let key = Arc::as_ptr(&s.episode);
            let id = *index.entry(key).or_insert_with(|| {
                episodes.push((*s.episode).clone());
                episodes.len() - 1
            });
            (id, s.start, s.len)
        });
        drop(replay);
        let blob = serde_json::to_vec(&ReplayBlob { episodes, buffer }).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        c.push_blob("replay", blob);
        Ok(c)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_checkpoint(path, &self.to_checkpoint()?).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    /// Restores a trainer from a checkpoint written by [`Trainer::save_checkpoint`].
    /// `cfg` may change run limits but must describe the same architecture.
    pub fn resume(path: &Path, cfg: TrainConfig, out_dir: Option<&Path>) -> Result<Self, TrainError> {
        cfg.validate()?;
        let ck = read_checkpoint(path).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
        let meta: TrainerMeta = serde_json::from_value(ck.header.extra.clone())
            .map_err(|e| TrainError::Checkpoint(format!("{}: not a trainer checkpoint ({e})", path.display())))?;
        if meta.architecture_hash != cfg.architecture_hash() || ck.header.network != cfg.network {
            return Err(TrainError::ArchitectureMismatch(format!(
                "checkpoint was trained with {:?}, config requests {:?}",
                meta.config.network, cfg.network
            )));
        }
        let ckerr = |e: crate::neural::NeuralError| TrainError::Checkpoint(e.to_string());
        let params = |prefix: &str| -> Result<NetworkParams<f32>, TrainError> { ck.params(prefix, &cfg.network).map_err(ckerr) };
        let net = |p: NetworkParams<f32>| Network { config: cfg.network.clone(), params: p };
        let mut learner = Learner::new(net(params("")?));
        learner.target = net(params("target.")?);
        learner.adam.state.m = params("adam.m.")?;
        learner.adam.state.v = params("adam.v.")?;
        learner.adam.state.t = meta.adam_t;
        learner.step = meta.learner_step;
        let store = Arc::new(ParamStore::with_version(meta.store_version, net(params("published.")?)));
        let mut actors = Vec::new();
        for snap in meta.actors {
            let p = params(&format!("actor{}.", snap.id))?;
            actors.push(Actor::restore(snap, Arc::new(net(p)), cfg.max_episode_len));
        }

        let blob: ReplayBlob = serde_json::from_slice(ck.blob("replay").map_err(ckerr)?)
            .map_err(|e| TrainError::Checkpoint(format!("replay section: {e}")))?;
        let episodes: Vec<Arc<EpisodeRecord>> = blob.episodes.into_iter().map(Arc::new).collect();
        let mut bad = false;
        let buffer = blob.buffer.map_items(|&(id, start, len)| match episodes.get(id) {
            Some(ep) => SequenceRef { episode: Arc::clone(ep), start, len },
            None => {
                bad = true;
                SequenceRef { episode: Arc::new(EpisodeRecord::new(1, 0, 0, 1)), start: 0, len: 0 }
            }
        });
        if bad {
            return Err(TrainError::Checkpoint("replay section references a missing episode".into()));
        }

        Ok(Trainer {
            learner,
            replay: Arc::new(Mutex::new(buffer)),
            curriculum: Arc::new(Mutex::new(meta.curriculum)),
            store,
            actors,
            sampler: meta.sampler,
            episodes: meta.episodes,
            next_actor: meta.next_actor,
            env_budget: meta.env_budget,
            loss_sum: meta.loss_sum,
            loss_count: meta.loss_count,
            skipped: meta.skipped,
            stop: Arc::new(AtomicBool::new(false)),
            out_dir: out_dir.map(Path::to_path_buf),
            cfg,
        })
    }
}

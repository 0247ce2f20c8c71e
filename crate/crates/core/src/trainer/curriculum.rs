use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub start_agents: usize,
    pub start_size: usize,
    /// Episodes in the success window of each stage.
    pub window: usize,
    /// A stage is mastered when its full-window success rate exceeds this.
    pub threshold: f64,
    pub agent_step: usize,
    pub size_step: usize,
    pub max_agents: usize,
    pub max_size: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            start_agents: 1,
            start_size: 10,
            window: 100,
            threshold: 0.9,
            agent_step: 1,
            size_step: 5,
            max_agents: 12,
            max_size: 40,
        }
    }
}

/// A `(num_agents, map_size)` task and its recent outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub agents: usize,
    pub size: usize,
    history: VecDeque<bool>,
    pub episodes: u64,
    /// Learner step at which the stage was first mastered.
    pub mastered_at: Option<u64>,
}

impl Stage {
    fn new(agents: usize, size: usize) -> Self {
        Stage { agents, size, history: VecDeque::new(), episodes: 0, mastered_at: None }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.agents, self.size)
    }

    pub fn success_rate(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.history.iter().filter(|&&s| s).count() as f64 / self.history.len() as f64
        }
    }

    pub fn window_len(&self) -> usize {
        self.history.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    config: CurriculumConfig,
    stages: Vec<Stage>,
}

impl Curriculum {
    pub fn new(config: CurriculumConfig) -> Self {
        let first = Stage::new(config.start_agents, config.start_size);
        Curriculum { config, stages: vec![first] }
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.config
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, key: (usize, usize)) -> Option<&Stage> {
        self.stages.iter().find(|s| s.key() == key)
    }

    fn full_and_passing(&self, s: &Stage) -> bool {
        s.history.len() >= self.config.window && s.success_rate() > self.config.threshold
    }

    /// Whether the stage currently passes the threshold over a full window.
    pub fn is_passing(&self, key: (usize, usize)) -> bool {
        self.stage(key).is_some_and(|s| self.full_and_passing(s))
    }

    /// True once every stage has been mastered and no successor remains.
    pub fn is_complete(&self) -> bool {
        self.stages.iter().all(|s| s.mastered_at.is_some())
    }

    /// Uniform over active stages not currently passing; all stages if every one passes.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let open: Vec<&Stage> = self.stages.iter().filter(|s| !self.full_and_passing(s)).collect();
        let pool: Vec<&Stage> = if open.is_empty() { self.stages.iter().collect() } else { open };
        pool[rng.gen_range(0..pool.len())].key()
    }

    /// Records an episode result; returns the stages spawned by it.
    pub fn record(&mut self, key: (usize, usize), success: bool, learner_step: u64) -> Vec<(usize, usize)> {
        let window = self.config.window;
        let Some(idx) = self.stages.iter().position(|s| s.key() == key) else {
            return Vec::new();
        };
        {
            let s = &mut self.stages[idx];
            s.history.push_back(success);
            while s.history.len() > window {
                s.history.pop_front();
            }
            s.episodes += 1;
        }
        if !self.full_and_passing(&self.stages[idx]) {
            return Vec::new();
        }
        if self.stages[idx].mastered_at.is_none() {
            self.stages[idx].mastered_at = Some(learner_step);
        }
        let (a, m) = key;
        let mut spawned = Vec::new();
        for next in [(a + self.config.agent_step, m), (a, m + self.config.size_step)] {
            if next.0 > self.config.max_agents || next.1 > self.config.max_size {
                continue;
            }
            if self.stage(next).is_none() {
                self.stages.push(Stage::new(next.0, next.1));
                spawned.push(next);
            }
        }
        spawned
    }
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Action, Cell};

/// Everything the learner needs to replay one episode: observations and
/// positions of all agents at every state, the focal agent's actions and
/// rewards, and the recurrent state recorded at each sequence boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub agents: usize,
    pub obs_len: usize,
    /// `(steps + 1) x agents x obs_len`.
    pub obs: Vec<u8>,
    /// `(steps + 1) x agents`.
    pub positions: Vec<Cell>,
    pub focal: usize,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// The episode ended with every agent on its goal.
    pub terminal: bool,
    pub seq_len: usize,
    /// Hidden state (`agents x D`) entering step `k * seq_len`.
    pub hidden: Vec<Vec<f32>>,
}

impl EpisodeRecord {
    pub fn new(agents: usize, obs_len: usize, focal: usize, seq_len: usize) -> Self {
        assert!(focal < agents);
        EpisodeRecord {
            agents,
            obs_len,
            obs: Vec::new(),
            positions: Vec::new(),
            focal,
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: false,
            seq_len,
            hidden: Vec::new(),
        }
    }

    /// Number of transitions.
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    /// Number of recorded states.
    pub fn states(&self) -> usize {
        self.positions.len() / self.agents
    }

    pub fn obs_at(&self, t: usize) -> &[u8] {
        let len = self.agents * self.obs_len;
        &self.obs[t * len..][..len]
    }

    pub fn positions_at(&self, t: usize) -> &[Cell] {
        &self.positions[t * self.agents..][..self.agents]
    }

    pub fn is_consistent(&self) -> bool {
        let s = self.steps();
        self.focal < self.agents
            && self.rewards.len() == s
            && self.positions.len() == (s + 1) * self.agents
            && self.obs.len() == (s + 1) * self.agents * self.obs_len
            && self.hidden.len() == s.div_ceil(self.seq_len).max(1)
    }
}

/// A window `[start, start + len)` of an episode's transitions.
#[derive(Debug, Clone)]
pub struct SequenceRef {
    pub episode: Arc<EpisodeRecord>,
    pub start: usize,
    pub len: usize,
}

impl SequenceRef {
    pub fn stored_hidden(&self) -> &[f32] {
        &self.episode.hidden[self.start / self.episode.seq_len]
    }
}

/// Splits an episode into consecutive windows of `seq_len` transitions (the last may be shorter).
pub fn cut_sequences(episode: &Arc<EpisodeRecord>) -> Vec<SequenceRef> {
    let l = episode.seq_len;
    (0..episode.steps())
        .step_by(l)
        .map(|start| SequenceRef { episode: Arc::clone(episode), start, len: l.min(episode.steps() - start) })
        .collect()
}

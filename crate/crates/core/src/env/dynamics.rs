use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::observe::{observe, Observation};
use super::{Action, Cell, EnvError, GridMap, ProblemInstance};
use crate::heuristic::{bfs_distance, DistanceMap};

pub const REWARD_MOVE: f64 = -0.075;
pub const REWARD_STAY_ON_GOAL: f64 = 0.0;
pub const REWARD_STAY_OFF_GOAL: f64 = -0.075;
pub const REWARD_COLLISION: f64 = -0.5;
pub const REWARD_FINISH: f64 = 3.0;

/// Positions and clock of a running episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub positions: Vec<Cell>,
    pub timestep: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub collided: Vec<bool>,
    /// Every agent on its goal, or the step limit reached.
    pub all_done: bool,
    /// Every agent on its goal.
    pub success: bool,
}

/// Resolves a simultaneous joint move.
///
/// Illegal targets (obstacle or off-map) are reverted first. Then, until
/// nothing changes, each pass reverts (a) every mover sharing a target cell
/// with another agent's intended cell, (b) both agents of a swap, and (c) any
/// mover whose target is the cell of an agent that is not moving. Each pass is
/// evaluated against the snapshot at its start, in agent index order, so the
/// result does not depend on scan order. Rotation cycles of three or more
/// agents contain no conflict and go through.
///
/// Returns the new positions and the per-agent collision flags.
pub fn resolve_moves(map: &GridMap, positions: &[Cell], actions: &[Action]) -> (Vec<Cell>, Vec<bool>) {
    let n = positions.len();
    let mut target = Vec::with_capacity(n);
    let mut collided = vec![false; n];
    for i in 0..n {
        let (dr, dc) = actions[i].delta();
        match positions[i].offset(dr, dc) {
            Some(t) if map.is_free(t) => target.push(t),
            _ => {
                target.push(positions[i]);
                collided[i] = true;
            }
        }
    }

    let occupant: HashMap<Cell, usize> = positions.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut claims: HashMap<Cell, usize> = HashMap::with_capacity(n);
    loop {
        let moving = |i: usize, t: &[Cell]| t[i] != positions[i];
        claims.clear();
        for &t in &target {
            *claims.entry(t).or_insert(0) += 1;
        }
        let mut revert = Vec::new();
        for i in 0..n {
            if !moving(i, &target) {
                continue;
            }
            let t = target[i];
            let vertex = claims[&t] >= 2;
            let (swap, blocked) = match occupant.get(&t) {
                Some(&j) => (target[j] == positions[i], !moving(j, &target)),
                None => (false, false),
            };
            if vertex || swap || blocked {
                revert.push(i);
            }
        }
        if revert.is_empty() {
            break;
        }
        for i in revert {
            target[i] = positions[i];
            collided[i] = true;
        }
    }
    (target, collided)
}

/// One episode on one instance.
#[derive(Debug, Clone)]
pub struct MapfEnv {
    instance: Arc<ProblemInstance>,
    distances: Arc<Vec<DistanceMap>>,
    state: EnvState,
    max_steps: usize,
    finished: bool,
}

impl MapfEnv {
    /// Starts an episode; BFS distance fields from each goal are computed once here.
    pub fn new(instance: Arc<ProblemInstance>, max_steps: usize) -> Self {
        let distances = instance
            .goals
            .iter()
            .map(|&g| bfs_distance(&instance.map, g).expect("instance goals are free cells"))
            .collect();
        Self::with_distances(instance, Arc::new(distances), max_steps)
    }

    pub fn with_distances(instance: Arc<ProblemInstance>, distances: Arc<Vec<DistanceMap>>, max_steps: usize) -> Self {
        let state = EnvState { positions: instance.starts.clone(), timestep: 0 };
        let mut env = MapfEnv { instance, distances, state, max_steps, finished: false };
        env.finished = env.all_on_goal();
        env
    }

    /// Restores an arbitrary (valid) state; used by tests and replay tooling.
    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
        self.finished = self.all_on_goal();
    }

    pub fn instance(&self) -> &Arc<ProblemInstance> {
        &self.instance
    }

    pub fn distances(&self) -> &Arc<Vec<DistanceMap>> {
        &self.distances
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn positions(&self) -> &[Cell] {
        &self.state.positions
    }

    pub fn timestep(&self) -> usize {
        self.state.timestep
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn num_agents(&self) -> usize {
        self.state.positions.len()
    }

    pub fn all_on_goal(&self) -> bool {
        self.state.positions.iter().zip(&self.instance.goals).all(|(p, g)| p == g)
    }

    pub fn is_done(&self) -> bool {
        self.finished || self.state.timestep >= self.max_steps
    }

    pub fn observe(&self, agent: usize, fov: usize) -> Observation {
        observe(&self.instance.map, &self.state.positions, agent, &self.distances[agent], fov)
    }

    pub fn observe_all(&self, fov: usize) -> Vec<Observation> {
        (0..self.num_agents()).map(|i| self.observe(i, fov)).collect()
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        if self.is_done() {
            return Err(EnvError::TerminalStep);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(EnvError::ActionCount { expected: n, actual: actions.len() });
        }
        let (next, collided) = resolve_moves(&self.instance.map, &self.state.positions, actions);
        let goals = &self.instance.goals;
        let mut rewards: Vec<f64> = (0..n)
            .map(|i| {
                if collided[i] {
                    REWARD_COLLISION
                } else if actions[i] != Action::Stay {
                    REWARD_MOVE
                } else if next[i] == goals[i] {
                    REWARD_STAY_ON_GOAL
                } else {
                    REWARD_STAY_OFF_GOAL
                }
            })
            .collect();
        self.state.positions = next;
        self.state.timestep += 1;
        let success = self.all_on_goal();
        if success {
            self.finished = true;
            for (r, &c) in rewards.iter_mut().zip(&collided) {
                if !c {
                    *r = REWARD_FINISH;
                }
            }
        }
        Ok(StepOutcome { rewards, collided, all_done: self.is_done(), success })
    }
}

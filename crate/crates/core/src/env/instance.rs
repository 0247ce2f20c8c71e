use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, EnvError, GridMap};

/// Attempts before `sample_instance` gives up on a map.
pub const DEFAULT_PLACEMENT_RETRIES: usize = 200;

/// A map plus one start and one goal per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub map: GridMap,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

impl ProblemInstance {
    /// Validates free placement, pairwise distinctness of all 2n cells and
    /// start-goal connectivity.
    pub fn new(map: GridMap, starts: Vec<Cell>, goals: Vec<Cell>) -> Result<Self, EnvError> {
        if starts.len() != goals.len() {
            return Err(EnvError::InvalidInstance(format!(
                "{} starts but {} goals",
                starts.len(),
                goals.len()
            )));
        }
        if starts.is_empty() {
            return Err(EnvError::InvalidInstance("no agents".into()));
        }
        let mut seen = HashSet::new();
        for &c in starts.iter().chain(goals.iter()) {
            if !map.is_free(c) {
                return Err(EnvError::InvalidInstance(format!("cell {c} is not a free in-map cell")));
            }
            if !seen.insert(c) {
                return Err(EnvError::InvalidInstance(format!("cell {c} used twice")));
            }
        }
        let labels = map.component_labels();
        for (i, (&s, &g)) in starts.iter().zip(&goals).enumerate() {
            if labels[map.index(s)] != labels[map.index(g)] {
                return Err(EnvError::InvalidInstance(format!("goal of agent {i} unreachable from its start")));
            }
        }
        Ok(ProblemInstance { map, starts, goals })
    }

    pub fn num_agents(&self) -> usize {
        self.starts.len()
    }
}

/// Draws `n` distinct starts uniformly among free cells, then for each start a
/// goal uniformly among unused cells of the start's connected component.
/// Retries the whole placement up to `DEFAULT_PLACEMENT_RETRIES` times.
pub fn sample_instance<R: Rng + ?Sized>(
    map: &GridMap,
    n: usize,
    rng: &mut R,
) -> Result<ProblemInstance, EnvError> {
    sample_instance_with_retries(map, n, DEFAULT_PLACEMENT_RETRIES, rng)
}

pub fn sample_instance_with_retries<R: Rng + ?Sized>(
    map: &GridMap,
    n: usize,
    retries: usize,
    rng: &mut R,
) -> Result<ProblemInstance, EnvError> {
    let free = map.free_cells();
    let fail = EnvError::InstanceGeneration { agents: n, retries };
    if n == 0 || free.len() < 2 * n {
        return Err(fail);
    }
    let labels = map.component_labels();
    'attempt: for _ in 0..retries {
        let starts: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
        let mut used: HashSet<Cell> = starts.iter().copied().collect();
        let mut goals = Vec::with_capacity(n);
        for &s in &starts {
            let label = labels[map.index(s)];
            let options: Vec<Cell> = free
                .iter()
                .copied()
                .filter(|&c| labels[map.index(c)] == label && !used.contains(&c))
                .collect();
            match options.choose(rng) {
                Some(&g) => {
                    used.insert(g);
                    goals.push(g);
                }
                None => continue 'attempt,
            }
        }
        return Ok(ProblemInstance { map: map.clone(), starts, goals });
    }
    Err(fail)
}

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Cell, GridMap, ProblemInstance};
use crate::heuristic::{bfs_distance, DistanceMap};

pub const DEFAULT_RESTARTS: usize = 20;

/// Collision-free joint plan; every path has `makespan + 1` cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub paths: Vec<Vec<Cell>>,
    pub makespan: usize,
    /// Sum over agents of the time of final arrival at the goal.
    pub sum_of_costs: usize,
    /// Priority order that succeeded.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conflict {
    AgentCount { expected: usize, got: usize },
    EmptyPath { agent: usize },
    WrongStart { agent: usize, expected: Cell, got: Cell },
    WrongGoal { agent: usize, expected: Cell, got: Cell },
    /// Cell is an obstacle or off the map.
    Blocked { agent: usize, t: usize, cell: Cell },
    /// Non-adjacent move arriving at step `t`.
    Jump { agent: usize, t: usize, from: Cell, to: Cell },
    Vertex { i: usize, j: usize, cell: Cell, t: usize },
    /// `i` moves `u -> v` while `j` moves `v -> u`, leaving at step `t`.
    Edge { i: usize, j: usize, u: Cell, v: Cell, t: usize },
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Conflict::AgentCount { expected, got } => write!(f, "expected {expected} paths, got {got}"),
            Conflict::EmptyPath { agent } => write!(f, "agent {agent} has an empty path"),
            Conflict::WrongStart { agent, expected, got } => write!(f, "agent {agent} starts at {got}, expected {expected}"),
            Conflict::WrongGoal { agent, expected, got } => write!(f, "agent {agent} ends at {got}, expected {expected}"),
            Conflict::Blocked { agent, t, cell } => write!(f, "step {t}: agent {agent} on blocked cell {cell}"),
            Conflict::Jump { agent, t, from, to } => write!(f, "step {t}: agent {agent} jumps from {from} to {to}"),
            Conflict::Vertex { i, j, cell, t } => write!(f, "step {t}: agents {i} and {j} both at {cell}"),
            Conflict::Edge { i, j, u, v, t } => write!(f, "step {t}: agents {i} and {j} swap across {u}-{v}"),
        }
    }
}

fn at(path: &[Cell], t: usize) -> Cell {
    path[t.min(path.len() - 1)]
}

/// Checks per-step legality and pairwise vertex/edge conflicts. Shorter paths
/// hold their last cell. Reports the earliest violation.
pub fn check_paths(map: &GridMap, paths: &[Vec<Cell>]) -> Result<(), Conflict> {
    if let Some(agent) = paths.iter().position(Vec::is_empty) {
        return Err(Conflict::EmptyPath { agent });
    }
    let horizon = paths.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..horizon {
        for (agent, p) in paths.iter().enumerate() {
            let cell = at(p, t);
            if !map.is_free(cell) {
                return Err(Conflict::Blocked { agent, t, cell });
            }
            if t > 0 {
                let from = at(p, t - 1);
                if !from.is_adjacent_or_same(cell) {
                    return Err(Conflict::Jump { agent, t, from, to: cell });
                }
            }
        }
        let mut seen: HashMap<Cell, usize> = HashMap::new();
        for (j, p) in paths.iter().enumerate() {
            let cell = at(p, t);
            if let Some(&i) = seen.get(&cell) {
                return Err(Conflict::Vertex { i, j, cell, t });
            }
            seen.insert(cell, j);
        }
        if t + 1 < horizon {
            for i in 0..paths.len() {
                let (u, v) = (at(&paths[i], t), at(&paths[i], t + 1));
                if u == v {
                    continue;
                }
                for j in i + 1..paths.len() {
                    if at(&paths[j], t) == v && at(&paths[j], t + 1) == u {
                        return Err(Conflict::Edge { i, j, u, v, t });
                    }
                }
            }
        }
    }
    Ok(())
}

/// A valid solution starts every agent at its start, ends it at its goal and
/// passes [`check_paths`].
pub fn validate_paths(instance: &ProblemInstance, paths: &[Vec<Cell>]) -> Result<(), Conflict> {
    let n = instance.num_agents();
    if paths.len() != n {
        return Err(Conflict::AgentCount { expected: n, got: paths.len() });
    }
    for (agent, p) in paths.iter().enumerate() {
        let (Some(&first), Some(&last)) = (p.first(), p.last()) else {
            return Err(Conflict::EmptyPath { agent });
        };
        if first != instance.starts[agent] {
            return Err(Conflict::WrongStart { agent, expected: instance.starts[agent], got: first });
        }
        if last != instance.goals[agent] {
            return Err(Conflict::WrongGoal { agent, expected: instance.goals[agent], got: last });
        }
    }
    check_paths(&instance.map, paths)
}

#[derive(Default)]
struct Reservations {
    vertex: HashSet<(Cell, usize)>,
    edge: HashSet<(Cell, Cell, usize)>,
    /// Cell occupied from this time on (a finished agent).
    parked: HashMap<Cell, usize>,
    /// Latest reserved time per cell.
    last: HashMap<Cell, usize>,
}

impl Reservations {
    fn add(&mut self, path: &[Cell]) {
        for (t, &c) in path.iter().enumerate() {
            self.vertex.insert((c, t));
            let e = self.last.entry(c).or_insert(t);
            *e = (*e).max(t);
            if t + 1 < path.len() && path[t + 1] != c {
                self.edge.insert((c, path[t + 1], t));
            }
        }
        let end = path.len() - 1;
        self.parked.insert(path[end], end);
    }

    fn free(&self, c: Cell, t: usize) -> bool {
        !self.vertex.contains(&(c, t)) && self.parked.get(&c).map_or(true, |&from| t < from)
    }
}

/// Space-time A* for one agent against the reservations; the returned path
/// ends with the agent parked on its goal for good.
fn plan_single(map: &GridMap, start: Cell, goal: Cell, h: &DistanceMap, res: &Reservations, max_steps: usize) -> Option<Vec<Cell>> {
    let h_of = |c: Cell| h.get(c).map(|d| d as usize);
    let h0 = h_of(start)?;
    if !res.free(start, 0) {
        return None;
    }
    // The goal may only be taken for good after every other visit to it.
    let settle = res.last.get(&goal).map_or(0, |&t| t + 1);
    let mut open = BinaryHeap::new();
    let mut parent: HashMap<(Cell, usize), (Cell, usize)> = HashMap::new();
    let mut closed: HashSet<(Cell, usize)> = HashSet::new();
    let mut seq = 0u64;
    open.push(Reverse((h0.max(settle), Reverse(0usize), seq, start)));
    while let Some(Reverse((_, Reverse(t), _, cell))) = open.pop() {
        if !closed.insert((cell, t)) {
            continue;
        }
        if cell == goal && t >= settle {
            let mut path = vec![cell];
            let mut key = (cell, t);
            while let Some(&p) = parent.get(&key) {
                path.push(p.0);
                key = p;
            }
            path.reverse();
            return Some(path);
        }
        if t >= max_steps {
            continue;
        }
        for next in std::iter::once(cell).chain(map.neighbors(cell)) {
            let nt = t + 1;
            if closed.contains(&(next, nt)) || !res.free(next, nt) || res.edge.contains(&(next, cell, t)) {
                continue;
            }
            let Some(hn) = h_of(next) else { continue };
            let f = nt + if next == goal { settle.saturating_sub(nt) } else { hn.max(settle.saturating_sub(nt)) };
            if f > max_steps {
                continue;
            }
            parent.entry((next, nt)).or_insert((cell, t));
            seq += 1;
            open.push(Reverse((f, Reverse(nt), seq, next)));
        }
    }
    None
}

/// Prioritized planning in a fixed order.
pub fn plan_in_order(instance: &ProblemInstance, order: &[usize], max_steps: usize) -> Option<Solution> {
    let n = instance.num_agents();
    let dists: Vec<DistanceMap> =
        instance.goals.iter().map(|&g| bfs_distance(&instance.map, g).expect("goal is a free cell")).collect();
    let mut res = Reservations::default();
    // Unplanned agents wait on their starts at t=0 only; reserve those cells then.
    for &s in &instance.starts {
        res.vertex.insert((s, 0));
    }
    let mut paths: Vec<Option<Vec<Cell>>> = vec![None; n];
    for &a in order {
        res.vertex.remove(&(instance.starts[a], 0));
        let path = plan_single(&instance.map, instance.starts[a], instance.goals[a], &dists[a], &res, max_steps)?;
        res.add(&path);
        paths[a] = Some(path);
    }
    let mut paths: Vec<Vec<Cell>> = paths.into_iter().map(|p| p.expect("every agent planned")).collect();
    let sum_of_costs = paths.iter().map(|p| p.len() - 1).sum();
    let makespan = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    for p in &mut paths {
        let last = *p.last().expect("non-empty path");
        p.resize(makespan + 1, last);
    }
    Some(Solution { paths, makespan, sum_of_costs, order: order.to_vec() })
}

/// Prioritized space-time A* with up to `restarts` random priority orders.
/// Not optimal; a feasibility and makespan reference.
pub fn oracle_solve_with<R: Rng + ?Sized>(instance: &ProblemInstance, max_steps: usize, restarts: usize, rng: &mut R) -> Option<Solution> {
    let mut order: Vec<usize> = (0..instance.num_agents()).collect();
    for _ in 0..restarts.max(1) {
        order.shuffle(rng);
        if let Some(s) = plan_in_order(instance, &order, max_steps) {
            return Some(s);
        }
    }
    None
}

pub fn oracle_solve<R: Rng + ?Sized>(instance: &ProblemInstance, max_steps: usize, rng: &mut R) -> Option<Solution> {
    oracle_solve_with(instance, max_steps, DEFAULT_RESTARTS, rng)
}

//! Per-step communication graph.
//!
//! Two agents are candidates for each other when they lie inside each other's
//! field of view (Chebyshev distance at most the FOV radius). Each receiver keeps
//! its nearest candidates by Manhattan distance, ties going to the lower index.

use serde::{Deserialize, Serialize};

use crate::env::Cell;

/// Default number of neighbors each agent listens to.
pub const DEFAULT_MAX_NEIGHBORS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommGraph {
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Graph without edges: every agent attends only to itself.
    pub fn isolated(n: usize) -> Self {
        CommGraph { neighbors: vec![Vec::new(); n] }
    }

    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        for (i, b) in neighbors.iter().enumerate() {
            assert!(b.iter().all(|&j| j < n && j != i), "invalid neighbor list for agent {i}");
        }
        CommGraph { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Neighbors `B_i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `B_i` with the receiver itself in front: the attention support.
    pub fn support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(i).chain(self.neighbors[i].iter().copied())
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

pub fn build_graph(positions: &[Cell], fov: usize) -> CommGraph {
    build_graph_with_limit(positions, fov, DEFAULT_MAX_NEIGHBORS)
}

pub fn build_graph_with_limit(positions: &[Cell], fov: usize, max_neighbors: usize) -> CommGraph {
    assert!(fov % 2 == 1, "field of view must be odd");
    let radius = fov / 2;
    let neighbors = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut cands: Vec<(usize, usize)> = positions
                .iter()
                .enumerate()
                .filter(|&(j, &q)| j != i && p.chebyshev(q) <= radius)
                .map(|(j, &q)| (p.manhattan(q), j))
                .collect();
            cands.sort_unstable();
            cands.into_iter().take(max_neighbors).map(|(_, j)| j).collect()
        })
        .collect();
    CommGraph { neighbors }
}

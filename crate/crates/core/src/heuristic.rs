//! Single-source BFS distance fields and the action-heuristic channels.
//!
//! For a goal `g`, every free cell stores its shortest 4-neighbor distance to
//! `g`. The heuristic channel for action `a` marks a window cell `c` when
//! stepping from `c` in direction `a` strictly decreases that distance, which
//! exposes every shortest-path choice at once rather than a single path.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Cell, GridMap};

/// Marker for cells with no path to the source (including obstacles).
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum HeuristicError {
    #[error("source cell {0} is an obstacle or off the map")]
    BlockedSource(Cell),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistanceMap {
    rows: usize,
    cols: usize,
    source: Cell,
    dist: Vec<u32>,
}

impl DistanceMap {
    pub fn source(&self) -> Cell {
        self.source
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Distance at `c`, `None` when unreachable or off the map.
    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.row >= self.rows || c.col >= self.cols {
            return None;
        }
        match self.dist[c.row * self.cols + c.col] {
            UNREACHABLE => None,
            d => Some(d),
        }
    }

    fn get_signed(&self, row: isize, col: isize) -> Option<u32> {
        if row < 0 || col < 0 {
            return None;
        }
        self.get(Cell::new(row as usize, col as usize))
    }

    pub fn raw(&self) -> &[u32] {
        &self.dist
    }

    /// Builds a map from raw distances (`UNREACHABLE` for no path).
    pub fn from_raw(rows: usize, cols: usize, source: Cell, dist: Vec<u32>) -> Self {
        assert_eq!(dist.len(), rows * cols);
        DistanceMap { rows, cols, source, dist }
    }
}

pub fn bfs_distance(map: &GridMap, goal: Cell) -> Result<DistanceMap, HeuristicError> {
    if !map.is_free(goal) {
        return Err(HeuristicError::BlockedSource(goal));
    }
    let mut dist = vec![UNREACHABLE; map.len()];
    dist[map.index(goal)] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for n in map.neighbors(c) {
            let ni = map.index(n);
            if dist[ni] == UNREACHABLE {
                dist[ni] = d + 1;
                queue.push_back(n);
            }
        }
    }
    Ok(DistanceMap { rows: map.rows(), cols: map.cols(), source: goal, dist })
}

/// Four binary `fov x fov` channels (Up, Down, Left, Right) centered on `center`.
pub fn heuristic_channels(dmap: &DistanceMap, center: Cell, fov: usize) -> Vec<u8> {
    let mut out = vec![0; 4 * fov * fov];
    heuristic_channels_into(dmap, center, fov, &mut out);
    out
}

/// Writes the channels into the first `4 * fov * fov` entries of `out`.
pub fn heuristic_channels_into(dmap: &DistanceMap, center: Cell, fov: usize, out: &mut [u8]) {
    assert!(fov % 2 == 1, "field of view must be odd");
    let radius = (fov / 2) as isize;
    let area = fov * fov;
    out[..4 * area].fill(0);
    for wr in 0..fov {
        for wc in 0..fov {
            let r = center.row as isize + wr as isize - radius;
            let c = center.col as isize + wc as isize - radius;
            let Some(here) = dmap.get_signed(r, c) else { continue };
            for (k, a) in Action::MOVES.iter().enumerate() {
                let (dr, dc) = a.delta();
                if let Some(next) = dmap.get_signed(r + dr, c + dc) {
                    if next < here {
                        out[k * area + wr * fov + wc] = 1;
                    }
                }
            }
        }
    }
}

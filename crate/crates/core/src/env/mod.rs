//! Standard-semantics MAPF gridworld.
//!
//! Agents move simultaneously on a 4-neighbor grid. Invalid moves (into
//! obstacles, off the map, into vertex or edge conflicts) are reverted until a
//! conflict-free joint move remains. Agents stay in the world after reaching
//! their goals; an episode ends only when every agent sits on its goal at the
//! same time, or when the step limit is hit.

mod dynamics;
mod format;
mod instance;
mod map;
mod observe;

pub use dynamics::{
    resolve_moves, EnvState, MapfEnv, StepOutcome, REWARD_COLLISION, REWARD_FINISH, REWARD_MOVE,
    REWARD_STAY_OFF_GOAL, REWARD_STAY_ON_GOAL,
};
pub use format::{parse_instance, parse_map, parse_trajectory, serialize_instance, serialize_map, serialize_trajectory, InstanceFile};
pub use instance::{sample_instance, ProblemInstance, DEFAULT_PLACEMENT_RETRIES};
pub use map::{corridor_map, generate_map, sample_density, triangular_from_uniform, GridMap};
pub use observe::{observe, Observation, OBS_CHANNELS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default episode step limit.
pub const DEFAULT_MAX_EPISODE_LEN: usize = 256;
/// Default field-of-view side length.
pub const DEFAULT_FOV: usize = 9;

/// A grid cell; row 0 is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Cell displaced by `(dr, dc)`, or `None` when that leaves the non-negative quadrant.
    pub fn offset(self, dr: isize, dc: isize) -> Option<Cell> {
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    pub fn is_adjacent_or_same(self, other: Cell) -> bool {
        self.manhattan(other) <= 1
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// The five primitive actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Stay = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];
    /// Movement actions in heuristic-channel order.
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Row/column displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    /// The action that moves `from` to `to`, if they are equal or 4-adjacent.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        Self::ALL.into_iter().find(|a| {
            let (dr, dc) = a.delta();
            from.offset(dr, dc) == Some(to)
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid map dimensions {rows}x{cols}: both sides must be at least 2")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("obstacle density {0} outside [0, 0.5]")]
    InvalidDensity(f64),
    #[error("cell grid has {actual} entries, expected {expected}")]
    CellCount { expected: usize, actual: usize },
    #[error("no valid placement of {agents} agents after {retries} attempts")]
    InstanceGeneration { agents: usize, retries: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("step called on a terminal state")]
    TerminalStep,
    #[error("expected {expected} actions, got {actual}")]
    ActionCount { expected: usize, actual: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

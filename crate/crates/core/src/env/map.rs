use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, EnvError};

/// Binary obstacle grid. `true` marks an obstacle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl GridMap {
    pub fn new(rows: usize, cols: usize, cells: Vec<bool>) -> Result<Self, EnvError> {
        if rows < 2 || cols < 2 {
            return Err(EnvError::InvalidDimensions { rows, cols });
        }
        if cells.len() != rows * cols {
            return Err(EnvError::CellCount { expected: rows * cols, actual: cells.len() });
        }
        Ok(GridMap { rows, cols, cells })
    }

    pub fn empty(rows: usize, cols: usize) -> Result<Self, EnvError> {
        Self::new(rows, cols, vec![false; rows * cols])
    }

    /// Builds a map from `.`/`#` rows. Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, EnvError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(EnvError::Parse { line: i + 1, message: "ragged row".into() });
            }
            cells.extend(r.bytes().map(|b| b == b'#'));
        }
        Self::new(rows.len(), cols, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.cols + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    /// Signed lookup; anything outside the map counts as an obstacle.
    pub fn is_obstacle_at(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            return true;
        }
        self.cells[row as usize * self.cols + col as usize]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.cells[self.index(c)]
    }

    pub fn set_obstacle(&mut self, c: Cell, obstacle: bool) {
        let i = self.index(c);
        self.cells[i] = obstacle;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn obstacle_count(&self) -> usize {
        self.cells.iter().filter(|&&o| o).count()
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.cells.len()).filter(|&i| !self.cells[i]).map(|i| self.cell_at(i)).collect()
    }

    /// Free 4-neighbors of `c`.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(dr, dc)| c.offset(dr, dc))
            .filter(move |&n| self.is_free(n))
    }

    /// Connected-component label per cell; obstacles get `usize::MAX`.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.cells.len()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if self.cells[start] || labels[start] != usize::MAX {
                continue;
            }
            labels[start] = next;
            queue.push_back(self.cell_at(start));
            while let Some(c) = queue.pop_front() {
                for n in self.neighbors(c) {
                    let ni = self.index(n);
                    if labels[ni] == usize::MAX {
                        labels[ni] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
        labels
    }
}

/// Places obstacles independently with probability `density`, resampling the
/// (vanishingly rare) all-obstacle outcome.
pub fn generate_map<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    density: f64,
    rng: &mut R,
) -> Result<GridMap, EnvError> {
    if rows < 2 || cols < 2 {
        return Err(EnvError::InvalidDimensions { rows, cols });
    }
    if !(0.0..=0.5).contains(&density) {
        return Err(EnvError::InvalidDensity(density));
    }
    loop {
        let cells: Vec<bool> = (0..rows * cols).map(|_| rng.gen::<f64>() < density).collect();
        if cells.iter().any(|&o| !o) {
            return GridMap::new(rows, cols, cells);
        }
    }
}

const TRI_LOW: f64 = 0.0;
const TRI_HIGH: f64 = 0.5;
const TRI_MODE: f64 = 0.33;

/// Inverse CDF of the triangular(0, 0.5, mode 0.33) density distribution.
pub fn triangular_from_uniform(u: f64) -> f64 {
    let (a, b, c) = (TRI_LOW, TRI_HIGH, TRI_MODE);
    let split = (c - a) / (b - a);
    if u < split {
        a + (u * (b - a) * (c - a)).sqrt()
    } else {
        b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
    }
}

/// Training obstacle density.
pub fn sample_density<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    triangular_from_uniform(rng.gen::<f64>())
}

/// Maze-like map of one-cell corridors: a random spanning tree carved over the
/// odd lattice, with a fraction `loop_rate` of the remaining inner walls opened
/// so that agents can pass each other.
pub fn corridor_map<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    loop_rate: f64,
    rng: &mut R,
) -> Result<GridMap, EnvError> {
    if rows < 2 || cols < 2 {
        return Err(EnvError::InvalidDimensions { rows, cols });
    }
    let mut map = GridMap::new(rows, cols, vec![true; rows * cols])?;
    let room_rows: Vec<usize> = (0..rows).step_by(2).collect();
    let room_cols: Vec<usize> = (0..cols).step_by(2).collect();
    let (rr, rc) = (room_rows.len(), room_cols.len());
    let mut visited = vec![false; rr * rc];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    map.set_obstacle(Cell::new(0, 0), false);
    while let Some(&(r, c)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * rc + c] {
            options.push((r - 1, c));
        }
        if r + 1 < rr && !visited[(r + 1) * rc + c] {
            options.push((r + 1, c));
        }
        if c > 0 && !visited[r * rc + c - 1] {
            options.push((r, c - 1));
        }
        if c + 1 < rc && !visited[r * rc + c + 1] {
            options.push((r, c + 1));
        }
        match options.choose(rng) {
            None => {
                stack.pop();
            }
            Some(&(nr, nc)) => {
                visited[nr * rc + nc] = true;
                let (a, b) = (Cell::new(room_rows[r], room_cols[c]), Cell::new(room_rows[nr], room_cols[nc]));
                map.set_obstacle(b, false);
                map.set_obstacle(Cell::new((a.row + b.row) / 2, (a.col + b.col) / 2), false);
                stack.push((nr, nc));
            }
        }
    }
    // Open extra walls between two free cells to create loops.
    for i in 0..map.len() {
        let cell = map.cell_at(i);
        if map.is_free(cell) {
            continue;
        }
        let vertical = cell.row > 0 && map.is_free(Cell::new(cell.row - 1, cell.col))
            && cell.row + 1 < rows && map.is_free(Cell::new(cell.row + 1, cell.col));
        let horizontal = cell.col > 0 && map.is_free(Cell::new(cell.row, cell.col - 1))
            && cell.col + 1 < cols && map.is_free(Cell::new(cell.row, cell.col + 1));
        if (vertical || horizontal) && rng.gen::<f64>() < loop_rate {
            map.set_obstacle(cell, false);
        }
    }
    Ok(map)
}

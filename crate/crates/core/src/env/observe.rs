use serde::{Deserialize, Serialize};

use super::{Cell, GridMap};
use crate::heuristic::{heuristic_channels_into, DistanceMap};

/// Obstacles, other agents, and four heuristic channels.
pub const OBS_CHANNELS: usize = 6;

/// Binary `6 x fov x fov` field-of-view tensor, channel-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub fov: usize,
    pub data: Vec<u8>,
}

impl Observation {
    pub fn zeros(fov: usize) -> Self {
        Observation { fov, data: vec![0; OBS_CHANNELS * fov * fov] }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.data[(channel * self.fov + row) * self.fov + col]
    }

    pub fn channel(&self, channel: usize) -> &[u8] {
        let a = self.fov * self.fov;
        &self.data[channel * a..(channel + 1) * a]
    }
}

/// Field of view centered on `agent`. Off-map cells read as obstacles in
/// channel 0; channel 1 marks the other agents; channels 2..6 are the
/// Up/Down/Left/Right heuristic channels of the agent's own distance field.
pub fn observe(map: &GridMap, positions: &[Cell], agent: usize, dmap: &DistanceMap, fov: usize) -> Observation {
    assert!(fov % 2 == 1 && fov >= 3, "field of view must be odd and at least 3");
    let radius = (fov / 2) as isize;
    let center = positions[agent];
    let area = fov * fov;
    let mut obs = Observation::zeros(fov);
    for wr in 0..fov {
        for wc in 0..fov {
            let r = center.row as isize + wr as isize - radius;
            let c = center.col as isize + wc as isize - radius;
            if map.is_obstacle_at(r, c) {
                obs.data[wr * fov + wc] = 1;
            }
        }
    }
    for (j, &p) in positions.iter().enumerate() {
        if j == agent || p.chebyshev(center) as isize > radius {
            continue;
        }
        let wr = (p.row as isize - center.row as isize + radius) as usize;
        let wc = (p.col as isize - center.col as isize + radius) as usize;
        obs.data[area + wr * fov + wc] = 1;
    }
    heuristic_channels_into(dmap, center, fov, &mut obs.data[2 * area..]);
    obs
}

//! Decentralized multi-agent path finding with heuristic-guided, communicating
//! recurrent Q-networks.
//!
//! The crate is organized bottom-up:
//!
//! * [`env`]: the gridworld (map generation, instance sampling, simultaneous
//!   moves with collision reverts, rewards, observations, text formats).
//! * [`heuristic`]: BFS distance fields and the four action-heuristic channels.
//! * [`comm_graph`]: nearest-neighbor communication graphs inside the field of view.
//! * [`neural`]: a hand-written network (conv encoder, GRUs, multi-head graph
//!   attention, dueling head) with exact backward passes, Adam and checkpoints.
//! * [`replay`]: sum-tree prioritized sequence replay.
//! * [`trainer`]: actor/learner orchestration, curriculum and training checkpoints.
//! * [`eval`]: evaluation harness, prioritized space-time A* oracle and path validation.

pub mod comm_graph;
pub mod env;
pub mod eval;
pub mod heuristic;
pub mod neural;
pub mod replay;
pub mod rng;
pub mod trainer;

pub use comm_graph::CommGraph;
pub use env::{Action, Cell, GridMap, MapfEnv, ProblemInstance};
pub use heuristic::DistanceMap;

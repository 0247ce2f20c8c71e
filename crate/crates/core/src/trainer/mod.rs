//! Distributed-style training: actors fill a prioritized sequence buffer while
//! a single learner optimizes the n-step Huber objective, under a curriculum
//! that grows agent count and map size.

mod actor;
mod config;
mod curriculum;
mod episode;
mod learner;
mod metrics;
mod run;

pub use actor::{actor_td_errors, Actor, ActorSnapshot, FinishedEpisode, ParamStore};
pub use config::{EpsilonConfig, HiddenInit, MapKind, TrainConfig};
pub use curriculum::{Curriculum, CurriculumConfig, Stage};
pub use episode::{cut_sequences, EpisodeRecord, SequenceRef};
pub use learner::{BatchStats, Learner};
pub use metrics::{MetricsLog, MetricsRow, METRICS_HEADER};
pub use run::{StopReason, TrainOutcome, Trainer, CHECKPOINT_FILE, METRICS_FILE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("worker failure: {0}")]
    Worker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Recurrent dueling Q-network with graph-attention communication, written
//! against plain slices with hand-derived backward passes.

mod attention;
mod checkpoint;
mod layers;
mod loss;
mod network;
mod optim;
mod params;
mod real;
mod tensor;

pub use attention::{attention_backward, attention_forward, AttentionCache};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use layers::{
    conv_backward, conv_forward, gru_backward, gru_forward, linear_backward, linear_forward, sigmoid, ConvGeometry, GruCache,
};
pub use loss::{dueling, huber, huber_grad, n_step_target, n_step_targets, Bootstrap, HUBER_DELTA};
pub use network::{
    greedy_action, Network, SequenceCache, SequenceInput, SequenceOutput, StepOutput,
};
pub use optim::{clip_grad_norm, Adam, AdamState, LrSchedule, DEFAULT_CLIP_NORM};
pub use params::{Dense, GruParams, NetworkConfig, NetworkParams, CONV_LAYERS};
pub use real::{matmul, DType, Real};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

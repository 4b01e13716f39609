//! Reverse-mode autodiff and the encoder-decoder transformer.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::ModelCheckpoint;
pub use graph::{AttnSpec, CeStats, Grads, Graph, NodeId, ParamId, ParamStore};
pub use model::{Batch, Memory, Model, ModelConfig};
pub use tensor::{log_softmax, log_sum_exp, Float, Mat};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("non-finite values in {tensor}")]
    NonFinite { tensor: String },
    #[error("decoder input of length {len} outside 1..={max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

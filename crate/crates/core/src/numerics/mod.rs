//! Dense `f64` kernels, parameters, optimisation and verification helpers.

mod adamw;
mod checkpoint;
mod gradcheck;
mod kernels;
mod loss;
mod params;
mod tensor;

use thiserror::Error;

pub use adamw::{AdamWConfig, AdamWState};
pub use checkpoint::{
    checkpoint_bytes, read_checkpoint_into, write_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use gradcheck::{grad_check, grad_check_terms, GradCheckReport};
pub use kernels::{
    embedding_lookup, linear_forward, relu, relu_backward, sigmoid, tanh_backward, AttentionCache,
    BlockCache, BlockOptions, Embedding, LayerNorm, Linear, MultiHeadSelfAttention,
    TransformerBlock,
};
pub use loss::{bce_cell, bce_with_logits, bce_with_logits_grad, bce_with_logits_terms};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor2;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("id {id} out of range for table of {size} rows")]
    IdOutOfRange { id: usize, size: usize },
    #[error("every attention position is masked")]
    AllPositionsMasked,
    #[error("non-finite value: {0}")]
    NonFiniteValue(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

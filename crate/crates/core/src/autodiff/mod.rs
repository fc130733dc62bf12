//! Minimal numeric substrate: dense `f64` matrices, a reverse-mode tape,
//! the layers the taggers need, and AdamW.

pub mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

use thiserror::Error;

pub use graph::{masked_softmax, Graph, RowMask, Var};
pub use layers::{attention_mix, cross_entropy, GruCell, Linear, Mlp2, Mode};
pub use params::{
    AdamWConfig, Gradients, ParamId, ParameterCheckpoint, ParameterStore, StoredParameter, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("target {target} of row {row} is masked out")]
    MaskedTarget { row: usize, target: usize },
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

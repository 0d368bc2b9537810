//! Small reverse-mode differentiation engine over dense `f64` matrices,
//! plus Adam, dropout masks and a checkpoint format.

use std::path::PathBuf;

mod checkpoint;
mod gradcheck;
mod optim;
pub(crate) mod params;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradient, check_gradient_with, check_param_gradients};
pub use optim::{dropout_mask, Adam};
pub use params::{uniform, ParamId, ParamStore};
pub use tape::{Gradients, Pick, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint format: {0}")]
    Format(String),
}

//! Inspection of trained models: root forget-gate balance, per-node
//! prediction probes and embedding neighbours.

mod gate;
mod neighbors;
mod probe;

pub use gate::{gate_bias, root_gate_norms, GateBiasReport};
pub use neighbors::{cosine, lm_embeddings, nearest_neighbors, pron_embeddings, Neighbor};
pub use probe::{probe, ProbeRow, ProbeTrace};

#[derive(Debug, thiserror::Error)]
pub enum DiagError {
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Pron(#[from] crate::pron::PronError),
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error(transparent)]
    Ids(#[from] crate::ids::IdsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("data error: {0}")]
    Data(String),
}

//! Pronunciation prediction: chained onset/nucleus/coda head, training,
//! error rates, grid search and the experiment matrix.

mod grid;
mod head;
mod metrics;
mod model;
mod train;

pub use grid::{
    grid_search, order_label, run_matrix, select_best, write_matrix_csv, Grid, GridCell, GridResult, MatrixRow,
    MatrixSpec, MATRIX_HEADER,
};
pub use head::{argmax, HeadOutput, Inventories, Inventory, OutputOrder, PronHead};
pub use metrics::{EvalReport, Prediction};
pub use model::{PronModel, RunConfig};
pub use train::{decompose_entries, evaluate, evaluate_trees, train, train_with, EpochStats, TrainOptions, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum PronError {
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Ids(#[from] crate::ids::IdsError),
    #[error(transparent)]
    Phono(#[from] crate::phono::PhonoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("data error: {0}")]
    Data(String),
}

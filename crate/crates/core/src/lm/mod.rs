//! Character-level language model with lookup or treeLSTM-composed input
//! embeddings, scored in bits per character.

use std::path::PathBuf;

mod cache;
mod corpus;
mod model;
mod train;

pub use cache::EmbeddingCache;
pub use corpus::{corpus_lines, read_corpus, shifted, stream, unigram_entropy, CharVocab, Sym};
pub use model::{char_tree, EmbeddingKind, LmConfig, LmInput, LmModel, LmState, WindowOutput};
pub use train::{eval_lm, train_lm, LmEpoch, LmOutcome, LmReport};

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data error: {0}")]
    Data(String),
}

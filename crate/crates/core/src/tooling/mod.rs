//! Run configuration files, provenance manifests and error categories
//! shared by the command-line front end.

use std::path::PathBuf;

mod config;
mod manifest;

pub use config::{
    load_grid, load_lm_config, load_matrix_config, load_run_config, run_config_from_str, validate_grid,
    validate_lm_config, validate_run_config, MatrixConfig, DROPOUT_RANGE, LEARNING_RATE_RANGE,
};
pub use manifest::{canonical_json, hash_file, sha256_hex, FileHash, Manifest};

use crate::autodiff::AutodiffError;
use crate::diagnostics::DiagError;
use crate::ids::IdsError;
use crate::lm::LmError;
use crate::phono::PhonoError;
use crate::pron::PronError;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{field}` must be in {allowed}, got {got}")]
    Validation { field: String, allowed: String, got: String },
}

/// Coarse failure classes, each with its own process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Io,
    Config,
    Data,
    Contract,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Io => "I/O error",
            Category::Config => "config error",
            Category::Data => "data error",
            Category::Contract => "contract error",
        }
    }

    /// 2 is left to usage errors.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Io => 3,
            Category::Config => 4,
            Category::Data => 5,
            Category::Contract => 6,
        }
    }
}

pub trait Categorized {
    fn category(&self) -> Category;
}

impl Categorized for ToolError {
    fn category(&self) -> Category {
        match self {
            ToolError::Io { .. } => Category::Io,
            ToolError::Config(_) | ToolError::Validation { .. } => Category::Config,
        }
    }
}

impl Categorized for IdsError {
    fn category(&self) -> Category {
        match self {
            IdsError::Io { .. } => Category::Io,
            _ => Category::Data,
        }
    }
}

impl Categorized for PhonoError {
    fn category(&self) -> Category {
        match self {
            PhonoError::Io { .. } => Category::Io,
            _ => Category::Data,
        }
    }
}

impl Categorized for AutodiffError {
    fn category(&self) -> Category {
        match self {
            AutodiffError::Io { .. } => Category::Io,
            AutodiffError::Format(_) => Category::Data,
            AutodiffError::Shape { .. } | AutodiffError::Contract(_) => Category::Contract,
        }
    }
}

impl Categorized for PronError {
    fn category(&self) -> Category {
        match self {
            PronError::Autodiff(e) => e.category(),
            PronError::Ids(e) => e.category(),
            PronError::Phono(e) => e.category(),
            PronError::Csv(e) if e.is_io_error() => Category::Io,
            PronError::Csv(_) | PronError::Data(_) => Category::Data,
        }
    }
}

impl Categorized for LmError {
    fn category(&self) -> Category {
        match self {
            LmError::Autodiff(e) => e.category(),
            LmError::Io { .. } => Category::Io,
            LmError::Data(_) => Category::Data,
        }
    }
}

impl Categorized for DiagError {
    fn category(&self) -> Category {
        match self {
            DiagError::Autodiff(e) => e.category(),
            DiagError::Pron(e) => e.category(),
            DiagError::Lm(e) => e.category(),
            DiagError::Ids(e) => e.category(),
            DiagError::Csv(e) if e.is_io_error() => Category::Io,
            DiagError::Csv(_) | DiagError::Data(_) => Category::Data,
            DiagError::Contract(_) => Category::Contract,
        }
    }
}

//! Ideographic description sequences: rule loading, recursive expansion
//! into binary glyph trees, and tree linearization.

mod idc;
mod rules;
mod tree;

use std::path::PathBuf;

pub use idc::{is_idc, Idc, RawOperator};
pub use rules::{
    load_rule_table, parse_rule_text, DecomposeOptions, Ids, RuleTable, ValidationReport,
    DEFAULT_MAX_DEPTH,
};
pub use tree::{
    binarize, parse_ids, parse_ids_str, parse_raw, reconstruct_pre_order, strip_operators,
    tokenize, GlyphTree, IdsToken, Leaf, LinearOrder, RawNode, SeqToken,
};

#[derive(Debug, thiserror::Error)]
pub enum IdsError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at token {index}: {message}")]
    Parse { index: usize, message: String },
    #[error("node with {arity} children cannot be binarized")]
    Structure { arity: usize },
    #[error("cyclic decomposition rules: {}", fmt_cycle(.codepoints))]
    Cycle { codepoints: Vec<char> },
    #[error("expansion of {codepoint} exceeded depth {max_depth}")]
    DepthExceeded { codepoint: char, max_depth: usize },
}

fn fmt_cycle(cs: &[char]) -> String {
    cs.iter().map(|c| format!("{c} (U+{:04X})", *c as u32)).collect::<Vec<_>>().join(" -> ")
}

//! Cantonese pronunciation data: jyutping segmentation, UniHan readers and
//! dataset splits.

use std::path::PathBuf;

mod jyutping;
mod split;
mod unihan;

pub use jyutping::{segment_jyutping, strip_tone, Syllable, Unit, NULL_MARK};
pub use split::{
    build_scenario, read_split_csv, write_split_csv, Corpus, DatasetSplit, Partition, PronEntry, Scenario,
    SplitSizes,
};
pub use unihan::{
    classify_script, parse_codepoint, parse_unihan_readings, parse_unihan_variants, pick_reading,
    readings_from_text, variants_from_text, ScriptClass, VariantMap,
};

#[derive(Debug, thiserror::Error)]
pub enum PhonoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot segment jyutping syllable `{syllable}`")]
    Segmentation { syllable: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Data(String),
}

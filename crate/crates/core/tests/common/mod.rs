#![allow(dead_code)]

use std::path::PathBuf;

/// Directory holding `ids.txt` and the UniHan files (see scripts/fetch_data.py).
pub fn data_dir() -> PathBuf {
    match std::env::var_os("HIERCHAR_DATA") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// Path to a data file, or `None` (with a note on stderr) when absent.
pub fn data_file(name: &str) -> Option<PathBuf> {
    let p = data_dir().join(name);
    if p.exists() {
        Some(p)
    } else {
        eprintln!("SKIP: {} not found; run scripts/fetch_data.py", p.display());
        None
    }
}
pub mod toy;

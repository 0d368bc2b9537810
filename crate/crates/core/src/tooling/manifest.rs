use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ToolError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written beside the outputs of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub data: Vec<FileHash>,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
}

/// JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(v: &T) -> Result<String, ToolError> {
    // serde_json's default map is ordered by key, so a round trip through
    // `Value` sorts every object.
    let value = serde_json::to_value(v).map_err(|e| ToolError::Config(e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| ToolError::Config(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<FileHash, ToolError> {
    let path = path.as_ref();
    let io = |source| ToolError::Io { path: path.to_path_buf(), source };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(FileHash { path: path.to_path_buf(), sha256: hex::encode(h.finalize()) })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Manifest {
    pub fn start<T: Serialize>(command: &str, config: &T, seed: u64) -> Result<Manifest, ToolError> {
        let canon = canonical_json(config)?;
        Ok(Manifest {
            command: command.to_string(),
            config: serde_json::from_str(&canon).map_err(|e| ToolError::Config(e.to_string()))?,
            config_sha256: sha256_hex(canon.as_bytes()),
            data: Vec::new(),
            seed,
            started: now(),
            finished: None,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn add_data(&mut self, path: impl AsRef<Path>) -> Result<(), ToolError> {
        self.data.push(hash_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().to_path_buf());
    }

    /// Stamps the finish time and writes `<dir>/<command>.manifest.json`.
    pub fn finish(mut self, dir: impl AsRef<Path>) -> Result<PathBuf, ToolError> {
        self.finished = Some(now());
        let path = dir.as_ref().join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&self).map_err(|e| ToolError::Config(e.to_string()))?;
        fs::write(&path, text).map_err(|source| ToolError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Manifest, ToolError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ToolError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))
    }
}

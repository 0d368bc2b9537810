use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::lm::LmConfig;
use crate::pron::{Grid, MatrixSpec, RunConfig};

pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-4, 3e-2);
pub const DROPOUT_RANGE: (f64, f64) = (0.0, 0.5);

/// Settings for `run-matrix`: a base run, the dimensions to vary and the
/// hyperparameter grid searched for each combination.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub base: RunConfig,
    pub matrix: MatrixSpec,
    pub grid: Grid,
}

fn in_range(field: &str, v: f64, (lo, hi): (f64, f64)) -> Result<(), ToolError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(ToolError::Validation { field: field.to_string(), allowed: format!("[{lo}, {hi}]"), got: v.to_string() })
    }
}

fn positive(field: &str, v: usize) -> Result<(), ToolError> {
    if v > 0 {
        Ok(())
    } else {
        Err(ToolError::Validation { field: field.to_string(), allowed: "≥ 1".into(), got: v.to_string() })
    }
}

pub fn validate_run_config(c: &RunConfig) -> Result<(), ToolError> {
    in_range("learning_rate", c.learning_rate, LEARNING_RATE_RANGE)?;
    in_range("dropout", c.dropout, DROPOUT_RANGE)?;
    if !(1..=3).contains(&c.scenario) {
        return Err(ToolError::Validation {
            field: "scenario".into(),
            allowed: "1, 2 or 3".into(),
            got: c.scenario.to_string(),
        });
    }
    positive("batch_size", c.batch_size)?;
    positive("hidden", c.hidden)?;
    positive("input_dim", c.input_dim)?;
    if !(c.clip_norm >= 0.0) {
        return Err(ToolError::Validation { field: "clip_norm".into(), allowed: "≥ 0".into(), got: c.clip_norm.to_string() });
    }
    Ok(())
}

pub fn validate_grid(g: &Grid) -> Result<(), ToolError> {
    if g.learning_rates.is_empty() || g.dropouts.is_empty() {
        return Err(ToolError::Validation {
            field: "grid".into(),
            allowed: "at least one learning rate and one dropout".into(),
            got: "empty".into(),
        });
    }
    for &lr in &g.learning_rates {
        in_range("grid.learning_rates", lr, LEARNING_RATE_RANGE)?;
    }
    for &d in &g.dropouts {
        in_range("grid.dropouts", d, DROPOUT_RANGE)?;
    }
    Ok(())
}

pub fn validate_lm_config(c: &LmConfig) -> Result<(), ToolError> {
    for (f, v) in [("dropout_input", c.dropout_input), ("dropout_hidden", c.dropout_hidden), ("dropout_output", c.dropout_output)] {
        in_range(f, v, (0.0, 0.9))?;
    }
    in_range("learning_rate", c.learning_rate, (1e-6, 1.0))?;
    in_range("weight_decay", c.weight_decay, (0.0, 1.0))?;
    if c.layers.is_empty() || c.layers.contains(&0) {
        return Err(ToolError::Validation {
            field: "layers".into(),
            allowed: "non-empty list of positive sizes".into(),
            got: format!("{:?}", c.layers),
        });
    }
    positive("embed_dim", c.embed_dim)?;
    positive("tree_input_dim", c.tree_input_dim)?;
    positive("batch_size", c.batch_size)?;
    positive("bptt", c.bptt)?;
    Ok(())
}

fn parse<T: DeserializeOwned>(path: &Path) -> Result<T, ToolError> {
    let text = fs::read_to_string(path).map_err(|source| ToolError::Io { path: path.to_path_buf(), source })?;
    parse_str(&text).map_err(|e| match e {
        ToolError::Config(m) => ToolError::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn parse_str<T: DeserializeOwned>(text: &str) -> Result<T, ToolError> {
    serde_json::from_str(text).map_err(|e| ToolError::Config(e.to_string()))
}

/// Reads and validates a pronunciation run config; missing fields take
/// their defaults and unknown fields are rejected.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig, ToolError> {
    let c: RunConfig = parse(path.as_ref())?;
    validate_run_config(&c)?;
    Ok(c)
}

pub fn run_config_from_str(text: &str) -> Result<RunConfig, ToolError> {
    let c: RunConfig = parse_str(text)?;
    validate_run_config(&c)?;
    Ok(c)
}

pub fn load_lm_config(path: impl AsRef<Path>) -> Result<LmConfig, ToolError> {
    let c: LmConfig = parse(path.as_ref())?;
    validate_lm_config(&c)?;
    Ok(c)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid, ToolError> {
    let g: Grid = parse(path.as_ref())?;
    validate_grid(&g)?;
    Ok(g)
}

pub fn load_matrix_config(path: impl AsRef<Path>) -> Result<MatrixConfig, ToolError> {
    let c: MatrixConfig = parse(path.as_ref())?;
    validate_run_config(&c.base)?;
    validate_grid(&c.grid)?;
    if c.matrix.scenarios.iter().any(|s| !(1..=3).contains(s)) {
        return Err(ToolError::Validation {
            field: "matrix.scenarios".into(),
            allowed: "1, 2 or 3".into(),
            got: format!("{:?}", c.matrix.scenarios),
        });
    }
    Ok(c)
}

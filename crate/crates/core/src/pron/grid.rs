use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::OutputOrder;
use super::metrics::EvalReport;
use super::model::RunConfig;
use super::train::{evaluate, train, TrainOutcome};
use super::PronError;
use crate::encoders::EncoderKind;
use crate::ids::{LinearOrder, RuleTable};
use crate::phono::DatasetSplit;

/// Learning-rate × dropout grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
}

impl Default for Grid {
    /// Log-spaced learning rates from 3e-2 to 1e-4, dropout 0 to 0.5.
    fn default() -> Self {
        Grid {
            learning_rates: vec![3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            dropouts: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl Grid {
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.learning_rates.iter().flat_map(|&lr| self.dropouts.iter().map(move |&d| (lr, d))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learning_rate: f64,
    pub dropout: f64,
    pub val_ter: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub best: RunConfig,
    pub outcome: TrainOutcome,
    pub cells: Vec<GridCell>,
}

/// Lowest validation TER wins; ties go to the lower learning rate, then
/// the lower dropout.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (x, y) = (&cells[a], &cells[b]);
        x.val_ter
            .total_cmp(&y.val_ter)
            .then(x.learning_rate.total_cmp(&y.learning_rate))
            .then(x.dropout.total_cmp(&y.dropout))
    })
}

/// Trains every grid cell from `base` and keeps the best. Cells run in
/// parallel when `parallel` is set; each cell is itself sequential, so the
/// result does not depend on scheduling.
pub fn grid_search(
    base: &RunConfig,
    split: &DatasetSplit,
    rules: &RuleTable,
    grid: &Grid,
    parallel: bool,
) -> Result<GridResult, PronError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(PronError::Data("empty hyperparameter grid".into()));
    }
    let run = |&(lr, d): &(f64, f64)| -> Result<(RunConfig, TrainOutcome), PronError> {
        let cfg = RunConfig { learning_rate: lr, dropout: d, ..base.clone() };
        let out = train(&cfg, split, rules)?;
        Ok((cfg, out))
    };
    // Only the table and the winner are kept; outcomes are dropped as soon
    // as a better one appears.
    let results: Vec<Result<(RunConfig, TrainOutcome), PronError>> =
        if parallel { cells.par_iter().map(run).collect() } else { cells.iter().map(run).collect() };
    let mut table = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        let (cfg, out) = r?;
        table.push(GridCell {
            learning_rate: cfg.learning_rate,
            dropout: cfg.dropout,
            val_ter: out.best_val_ter,
            best_epoch: out.best_epoch,
        });
        outcomes.push(Some((cfg, out)));
    }
    let i = select_best(&table).unwrap();
    let (best, outcome) = outcomes[i].take().unwrap();
    Ok(GridResult { best, outcome, cells: table })
}

/// Experiment dimensions; every combination becomes one report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub encoders: Vec<EncoderKind>,
    pub scenarios: Vec<u8>,
    pub orders: Vec<LinearOrder>,
    /// `true` removes composition operators from the input.
    pub ablations: Vec<bool>,
    pub output_orders: Vec<OutputOrder>,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec {
            encoders: EncoderKind::ALL.to_vec(),
            scenarios: vec![1, 2, 3],
            orders: vec![LinearOrder::Pre],
            ablations: vec![false],
            output_orders: vec![OutputOrder::CodaFirst],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub model: String,
    pub scenario: u8,
    pub order: String,
    pub ablation: String,
    pub report: EvalReport,
    pub config: RunConfig,
}

impl MatrixSpec {
    /// Distinct run configurations; linearization orders collapse for the
    /// tree encoder, which does not linearize.
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out: Vec<RunConfig> = Vec::new();
        for &scenario in &self.scenarios {
            for &encoder in &self.encoders {
                for &order in &self.orders {
                    for &ablate in &self.ablations {
                        for &output_order in &self.output_orders {
                            let order = if encoder == EncoderKind::TreeLstm { LinearOrder::Pre } else { order };
                            let cfg = RunConfig { encoder, scenario, order, operators: !ablate, output_order, ..base.clone() };
                            if !out.contains(&cfg) {
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn order_label(cfg: &RunConfig) -> String {
    let lin = if cfg.encoder == EncoderKind::TreeLstm { "tree" } else { cfg.order.name() };
    format!("{lin}:{}", cfg.output_order.name())
}

/// Grid-searches every configuration on its scenario's validation set and
/// reports test-set errors of the selected model.
pub fn run_matrix(
    base: &RunConfig,
    spec: &MatrixSpec,
    splits: &BTreeMap<u8, DatasetSplit>,
    rules: &RuleTable,
    grid: &Grid,
    parallel: bool,
) -> Result<Vec<MatrixRow>, PronError> {
    let mut rows = Vec::new();
    for cfg in spec.configs(base) {
        let split = splits
            .get(&cfg.scenario)
            .ok_or_else(|| PronError::Data(format!("no split prepared for scenario {}", cfg.scenario)))?;
        let result = grid_search(&cfg, split, rules, grid, parallel)?;
        let report = evaluate(&result.outcome.model, &split.test, rules)?;
        rows.push(MatrixRow {
            model: cfg.encoder.label().to_string(),
            scenario: cfg.scenario,
            order: order_label(&cfg),
            ablation: if cfg.operators { "none" } else { "no-operators" }.to_string(),
            report,
            config: result.best,
        });
    }
    Ok(rows)
}

pub const MATRIX_HEADER: [&str; 9] = ["model", "scenario", "order", "ablation", "SER", "TER", "onset", "nucleus", "coda"];

pub fn write_matrix_csv<W: Write>(rows: &[MatrixRow], w: W) -> Result<(), PronError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(MATRIX_HEADER)?;
    for r in rows {
        let p = &r.report;
        out.write_record([
            r.model.clone(),
            r.scenario.to_string(),
            r.order.clone(),
            r.ablation.clone(),
            format!("{:.2}", p.ser),
            format!("{:.2}", p.ter),
            format!("{:.2}", p.onset),
            format!("{:.2}", p.nucleus),
            format!("{:.2}", p.coda),
        ])?;
    }
    out.flush().map_err(|e| PronError::Data(e.to_string()))?;
    Ok(())
}

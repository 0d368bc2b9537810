use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::Inventories;
use super::metrics::EvalReport;
use super::model::{PronModel, RunConfig};
use super::PronError;
use crate::autodiff::{Adam, Tape};
use crate::encoders::{Dropout, Vocab};
use crate::ids::{GlyphTree, RuleTable, DEFAULT_MAX_DEPTH};
use crate::phono::{DatasetSplit, PronEntry};

/// Glyph trees for a list of entries; characters the table does not know
/// become a single UNK leaf.
pub fn decompose_entries(rules: &RuleTable, entries: &[PronEntry]) -> Result<Vec<GlyphTree>, PronError> {
    entries.iter().map(|e| Ok(rules.decompose(e.ch, DEFAULT_MAX_DEPTH)?)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean training loss; `None` before the first epoch.
    pub train_loss: Option<f64>,
    pub val_ter: f64,
    pub train_ter: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation TER.
    pub model: PronModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_ter: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Also report training-set TER each epoch.
    pub track_train_ter: bool,
}

/// Scores a model on entries whose trees are given.
pub fn evaluate_trees(model: &PronModel, entries: &[PronEntry], trees: &[GlyphTree]) -> Result<EvalReport, PronError> {
    if entries.is_empty() {
        return Err(PronError::Data("cannot evaluate an empty partition".into()));
    }
    let refs: Vec<&GlyphTree> = trees.iter().collect();
    let preds = model.predict(&refs)?;
    Ok(EvalReport::from_pairs(preds.iter().zip(entries)))
}

pub fn evaluate(model: &PronModel, entries: &[PronEntry], rules: &RuleTable) -> Result<EvalReport, PronError> {
    let trees = decompose_entries(rules, entries)?;
    evaluate_trees(model, entries, &trees)
}

/// Mini-batch Adam training with best-validation selection.
pub fn train(cfg: &RunConfig, split: &DatasetSplit, rules: &RuleTable) -> Result<TrainOutcome, PronError> {
    train_with(cfg, split, rules, TrainOptions::default())
}

pub fn train_with(
    cfg: &RunConfig,
    split: &DatasetSplit,
    rules: &RuleTable,
    opts: TrainOptions,
) -> Result<TrainOutcome, PronError> {
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(PronError::Data("training and validation partitions must be non-empty".into()));
    }
    let train_trees = decompose_entries(rules, &split.train)?;
    let val_trees = decompose_entries(rules, &split.validation)?;
    let vocab = Vocab::from_trees(&train_trees);
    let inventories = Inventories::from_entries(&split.train);
    let mut model = PronModel::new(cfg, vocab, inventories);
    let all_train: Vec<&PronEntry> = split.train.iter().collect();
    let targets = model.targets(&all_train)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    let val = evaluate_trees(&model, &split.validation, &val_trees)?;
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: None,
        val_ter: val.ter,
        train_ter: opts.track_train_ter.then(|| evaluate_trees(&model, &split.train, &train_trees).map(|r| r.ter)).transpose()?,
    }];
    let mut best = (val.ter, 0, model.store.clone());

    for epoch in 1..=cfg.epochs {
        if best.0 == 0.0 {
            break;
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let trees: Vec<&GlyphTree> = batch.iter().map(|&i| &train_trees[i]).collect();
            let tgt = [0, 1, 2].map(|k| batch.iter().map(|&i| targets[k][i]).collect::<Vec<_>>());
            let mut grads = {
                let mut tape = Tape::new(&model.store);
                let mut drop = Dropout { rate: cfg.dropout, rng: &mut rng };
                let out = model.forward(&mut tape, &trees, Some(&mut drop))?;
                let loss = model.head.loss(&mut tape, &out, &tgt)?;
                loss_sum += tape.value(loss).item() * batch.len() as f64;
                tape.backward(loss)?
            };
            if cfg.clip_norm > 0.0 {
                grads.clip_global_norm(cfg.clip_norm);
            }
            adam.step(&mut model.store, &grads)?;
        }
        let val = evaluate_trees(&model, &split.validation, &val_trees)?;
        let train_ter = opts
            .track_train_ter
            .then(|| evaluate_trees(&model, &split.train, &train_trees).map(|r| r.ter))
            .transpose()?;
        let stats = EpochStats { epoch, train_loss: Some(loss_sum / split.train.len() as f64), val_ter: val.ter, train_ter };
        debug!("epoch {epoch}: loss {:.4} val TER {:.2}", loss_sum / split.train.len() as f64, stats.val_ter);
        if val.ter < best.0 {
            best = (val.ter, epoch, model.store.clone());
        }
        history.push(stats);
    }
    info!(
        "{} lr={} dropout={}: best val TER {:.2} at epoch {}",
        cfg.encoder.label(),
        cfg.learning_rate,
        cfg.dropout,
        best.0,
        best.1
    );
    let (best_val_ter, best_epoch, store) = best;
    model.store = store;
    Ok(TrainOutcome { model, history, best_epoch, best_val_ter })
}

use std::f64::consts::LN_2;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::EmbeddingCache;
use super::corpus::{shifted, stream, CharVocab, Sym};
use super::model::{LmConfig, LmModel, LmState};
use super::LmError;
use crate::autodiff::{Adam, Tape};
use crate::encoders::Dropout;
use crate::ids::RuleTable;

/// Corpus-level scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    /// Predicted symbols, end-of-line marks included.
    pub symbols: usize,
    pub bpc: f64,
    /// `2^bpc`.
    pub ppl: f64,
    /// Target characters outside the training vocabulary.
    pub oov: usize,
    /// Out-of-vocabulary inputs that got a composed (not UNK) embedding.
    pub composed_oov: usize,
}

impl LmReport {
    pub fn from_bits(symbols: usize, bits: f64, oov: usize, composed_oov: usize) -> LmReport {
        let bpc = bits / symbols as f64;
        LmReport { symbols, bpc, ppl: bpc.exp2(), oov, composed_oov }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmEpoch {
    pub epoch: usize,
    /// Mean training loss in bits, under dropout.
    pub train_bpc: f64,
    pub valid_bpc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    /// Best-validation parameters, or the last epoch without validation data.
    pub model: LmModel,
    pub history: Vec<LmEpoch>,
    pub best_epoch: usize,
}

/// Scores `lines` as one stream, carrying the recurrent state across
/// windows. With `cache`, composed embeddings come from the cache, which
/// is rebuilt first if the parameters changed since it was filled.
pub fn eval_lm<S: AsRef<str>>(
    model: &LmModel,
    lines: &[S],
    rules: Option<&RuleTable>,
    cache: Option<&mut EmbeddingCache>,
) -> Result<LmReport, LmError> {
    let s = stream(lines);
    if s.is_empty() {
        return Err(LmError::Data("cannot evaluate an empty corpus".into()));
    }
    let (inputs, targets) = shifted(&s);
    let inputs: Vec<Sym> = inputs.into_iter().map(|x| model.input_sym(x, rules)).collect();
    let oov = targets.iter().filter(|t| matches!(t, Sym::Char(c) if !model.vocab.contains(*c))).count();
    let composed_oov = inputs.iter().filter(|t| matches!(t, Sym::Char(c) if !model.vocab.contains(*c))).count();

    let cache: Option<&EmbeddingCache> = match (cache, model.is_hierarchical()) {
        (Some(cache), true) => {
            let rules = rules.ok_or_else(|| LmError::Data("hierarchical input needs a rule table".into()))?;
            let chars = inputs.iter().filter_map(|x| match x {
                Sym::Char(c) => Some(*c),
                _ => None,
            });
            cache.ensure(model, chars, rules)?;
            Some(cache)
        }
        _ => None,
    };

    let window = model.cfg.bptt.max(1);
    let mut state: Option<LmState> = None;
    let mut bits = 0.0;
    for (xs, ys) in inputs.chunks(window).zip(targets.chunks(window)) {
        let mut tape = Tape::new(&model.store);
        let steps: Vec<Vec<Sym>> = xs.iter().map(|&x| vec![x]).collect();
        let x = model.embed_steps(&mut tape, &steps, rules, cache, None)?;
        let out = model.window(&mut tape, &x, state.as_ref(), None, None)?;
        let lp = tape.value(out.log_probs);
        for (r, &y) in ys.iter().enumerate() {
            bits -= lp.get(r, model.vocab.index(y)) / LN_2;
        }
        state = Some(LmModel::state_of(&tape, &out.last));
    }
    Ok(LmReport::from_bits(targets.len(), bits, oov, composed_oov))
}

/// Adam with truncated backpropagation over `batch_size` contiguous
/// streams; the state is carried across windows and reset each epoch.
pub fn train_lm<S: AsRef<str>>(
    cfg: &LmConfig,
    train_lines: &[S],
    valid_lines: Option<&[S]>,
    rules: Option<&RuleTable>,
) -> Result<LmOutcome, LmError> {
    let s = stream(train_lines);
    if s.is_empty() {
        return Err(LmError::Data("empty training corpus".into()));
    }
    if valid_lines.is_some_and(|v| v.is_empty()) {
        return Err(LmError::Data("empty validation corpus".into()));
    }
    let vocab = CharVocab::from_lines(train_lines);
    let mut model = LmModel::new(cfg, vocab, rules)?;
    let (inputs, targets) = shifted(&s);
    let streams = cfg.batch_size.clamp(1, s.len());
    let len = s.len() / streams;
    if s.len() % streams != 0 {
        debug!("dropping {} trailing symbols to fill {streams} streams", s.len() % streams);
    }
    let inputs: Vec<Sym> = inputs.into_iter().map(|x| model.input_sym(x, rules)).collect();
    let targets: Vec<usize> = targets.iter().map(|&y| model.vocab.index(y)).collect();

    let mut rngs: Vec<ChaCha8Rng> = (1..=3).map(|k| ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k))).collect();
    let mut adam = Adam::new(cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;
    let window = cfg.bptt.max(1);

    for epoch in 1..=cfg.epochs {
        if cfg.lr_decay_epoch.is_some_and(|e| epoch > e) {
            adam.lr = cfg.learning_rate / 10.0;
        }
        let mut state: Option<LmState> = None;
        let mut nats = 0.0;
        let mut count = 0usize;
        for t0 in (0..len).step_by(window) {
            let t1 = (t0 + window).min(len);
            let steps: Vec<Vec<Sym>> = (t0..t1).map(|t| (0..streams).map(|b| inputs[b * len + t]).collect()).collect();
            let targets = &targets;
            let ys: Vec<usize> = (t0..t1).flat_map(|t| (0..streams).map(move |b| targets[b * len + t])).collect();
            let n = ys.len();
            let (mut grads, next) = {
                let [r0, r1, r2] = &mut rngs[..] else { unreachable!() };
                let mut d_in = Dropout { rate: cfg.dropout_input, rng: r0 };
                let mut d_hid = Dropout { rate: cfg.dropout_hidden, rng: r1 };
                let mut d_out = Dropout { rate: cfg.dropout_output, rng: r2 };
                let mut tape = Tape::new(&model.store);
                let x = model.embed_steps(&mut tape, &steps, rules, None, Some(&mut d_in))?;
                let out = model.window(&mut tape, &x, state.as_ref(), Some(&mut d_hid), Some(&mut d_out))?;
                let loss = tape.nll(out.log_probs, &ys, 1.0 / n as f64)?;
                nats += tape.value(loss).item() * n as f64;
                (tape.backward(loss)?, LmModel::state_of(&tape, &out.last))
            };
            count += n;
            if cfg.weight_decay > 0.0 {
                for (id, g) in grads.iter_mut() {
                    let p = model.store.get(id);
                    for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
                        *gv += cfg.weight_decay * pv;
                    }
                }
            }
            if cfg.clip_norm > 0.0 {
                grads.clip_global_norm(cfg.clip_norm);
            }
            adam.step(&mut model.store, &grads)?;
            state = Some(next);
        }
        let train_bpc = nats / count as f64 / LN_2;
        let valid_bpc = match valid_lines {
            Some(v) => {
                let mut cache = EmbeddingCache::new();
                let cache = model.is_hierarchical().then_some(&mut cache);
                Some(eval_lm(&model, v, rules, cache)?.bpc)
            }
            None => None,
        };
        debug!("epoch {epoch}: train {train_bpc:.4} bpc, valid {valid_bpc:?}");
        if let Some(v) = valid_bpc {
            if best.as_ref().map_or(true, |b| v < b.0) {
                best = Some((v, epoch, model.store.clone()));
            }
        }
        history.push(LmEpoch { epoch, train_bpc, valid_bpc });
    }
    let best_epoch = match best {
        Some((v, epoch, store)) => {
            info!("best validation {v:.4} bpc at epoch {epoch}");
            model.store = store;
            epoch
        }
        None => cfg.epochs,
    };
    Ok(LmOutcome { model, history, best_epoch })
}

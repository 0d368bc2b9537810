use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{argmax, HeadOutput, Inventories, OutputOrder, PronHead};
use super::metrics::Prediction;
use super::PronError;
use crate::autodiff::{read_checkpoint, write_checkpoint, ParamStore, Tape, Var};
use crate::encoders::{Dropout, Encoder, EncoderConfig, EncoderKind, Vocab};
use crate::ids::{GlyphTree, LinearOrder};
use crate::phono::{PronEntry, Unit};

/// Everything that defines one pronunciation-prediction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub encoder: EncoderKind,
    pub scenario: u8,
    /// Linearization order for sequence encoders.
    pub order: LinearOrder,
    /// Feed composition operators to the encoder (false = ablation).
    pub operators: bool,
    pub output_order: OutputOrder,
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub tree_bias: bool,
    pub head_bias: bool,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            encoder: EncoderKind::TreeLstm,
            scenario: 1,
            order: LinearOrder::Pre,
            operators: true,
            output_order: OutputOrder::CodaFirst,
            learning_rate: 1e-3,
            dropout: 0.0,
            epochs: 200,
            batch_size: 128,
            hidden: 256,
            input_dim: 64,
            tree_bias: true,
            head_bias: true,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder,
            input_dim: self.input_dim,
            hidden: self.hidden,
            order: self.order,
            use_operators: self.operators,
            tree_bias: self.tree_bias,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: RunConfig,
    inventories: Inventories,
    vocab: String,
}

/// Encoder plus chained head, with its parameters.
#[derive(Clone, Debug)]
pub struct PronModel {
    pub cfg: RunConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub head: PronHead,
    pub inventories: Inventories,
}

impl PronModel {
    pub fn new(cfg: &RunConfig, vocab: Vocab, inventories: Inventories) -> PronModel {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &cfg.encoder_config(), vocab, &mut rng);
        let head = PronHead::new(
            &mut store,
            encoder.output_dim(),
            &inventories,
            cfg.output_order,
            cfg.head_bias,
            &mut rng,
        );
        PronModel { cfg: cfg.clone(), store, encoder, head, inventories }
    }

    /// Character embeddings, with dropout on the inputs and on the output.
    pub fn embed(&self, tape: &mut Tape, trees: &[&GlyphTree], mut dropout: Option<&mut Dropout>) -> Result<Var, PronError> {
        let h = self.encoder.encode(tape, trees, &self.cfg.encoder_config(), dropout.as_deref_mut())?;
        Ok(match dropout {
            Some(d) => d.apply(tape, h)?,
            None => h,
        })
    }

    pub fn forward(&self, tape: &mut Tape, trees: &[&GlyphTree], dropout: Option<&mut Dropout>) -> Result<HeadOutput, PronError> {
        let h = self.embed(tape, trees, dropout)?;
        Ok(self.head.predict(tape, h)?)
    }

    /// Class indices in chain order; errors on labels outside the inventories.
    pub fn targets(&self, entries: &[&PronEntry]) -> Result<[Vec<usize>; 3], PronError> {
        let units = self.head.order.units();
        let mut out: [Vec<usize>; 3] = Default::default();
        for (k, u) in units.iter().enumerate() {
            let inv = self.inventories.get(*u);
            for e in entries {
                let label = e.unit(*u);
                out[k].push(inv.index(label).ok_or_else(|| {
                    PronError::Data(format!("{} `{label}` of {} is not in the training inventory", u.name(), e.ch))
                })?);
            }
        }
        Ok(out)
    }

    /// Argmax decoding of a head output.
    pub fn decode(&self, tape: &Tape, out: &HeadOutput) -> Vec<Prediction> {
        let units = self.head.order.units();
        let rows = tape.value(out.probs[0]).rows();
        (0..rows)
            .map(|r| {
                let mut labels = [String::new(), String::new(), String::new()];
                for (k, u) in units.iter().enumerate() {
                    let i = argmax(tape.value(out.probs[k]).row_slice(r));
                    let slot = Unit::ALL.iter().position(|x| x == u).unwrap();
                    labels[slot] = self.inventories.get(*u).label(i).to_string();
                }
                let [onset, nucleus, coda] = labels;
                Prediction { onset, nucleus, coda }
            })
            .collect()
    }

    /// Evaluation-mode predictions, batched by the configured batch size.
    pub fn predict(&self, trees: &[&GlyphTree]) -> Result<Vec<Prediction>, PronError> {
        let mut out = Vec::with_capacity(trees.len());
        for chunk in trees.chunks(self.cfg.batch_size.max(1)) {
            let mut tape = Tape::new(&self.store);
            let head = self.forward(&mut tape, chunk, None)?;
            out.extend(self.decode(&tape, &head));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PronError> {
        let manifest = Manifest {
            config: self.cfg.clone(),
            inventories: self.inventories.clone(),
            vocab: self.encoder.vocab().leaf_chars().into_iter().collect(),
        };
        let json = serde_json::to_value(&manifest).map_err(|e| PronError::Data(e.to_string()))?;
        write_checkpoint(path, &self.store, &json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PronModel, PronError> {
        let (store, json) = read_checkpoint(path)?;
        let m: Manifest = serde_json::from_value(json).map_err(|e| PronError::Data(format!("checkpoint manifest: {e}")))?;
        let mut model = PronModel::new(&m.config, Vocab::new(m.vocab.chars()), m.inventories);
        model.store.load_from(&store)?;
        Ok(model)
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::EmbeddingCache;
use super::corpus::{CharVocab, Sym};
use super::LmError;
use crate::autodiff::{read_checkpoint, write_checkpoint, ParamId, ParamStore, Pick, Tape, Tensor, Var};
use crate::encoders::{Dropout, LstmState, StackedLstm, TreeLstm, TreeLstmConfig, Vocab};
use crate::ids::{GlyphTree, RuleTable, DEFAULT_MAX_DEPTH};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// One trained vector per character.
    #[default]
    Lookup,
    /// Character vectors composed by a treeLSTM over glyph trees.
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub embedding: EmbeddingKind,
    pub embed_dim: usize,
    /// Leaf/operator vector size inside the treeLSTM.
    pub tree_input_dim: usize,
    pub layers: Vec<usize>,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub dropout_output: f64,
    pub learning_rate: f64,
    /// Epoch after which the learning rate is divided by 10.
    pub lr_decay_epoch: Option<usize>,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Number of parallel streams.
    pub batch_size: usize,
    /// Truncated backpropagation length.
    pub bptt: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            embedding: EmbeddingKind::Lookup,
            embed_dim: 200,
            tree_input_dim: 200,
            layers: vec![1000, 1000, 200],
            dropout_input: 0.1,
            dropout_hidden: 0.1,
            dropout_output: 0.25,
            learning_rate: 2e-3,
            lr_decay_epoch: Some(250),
            weight_decay: 1.2e-6,
            epochs: 300,
            batch_size: 100,
            bptt: 70,
            clip_norm: 0.25,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum LmInput {
    Lookup { table: ParamId },
    /// `special` holds the UNK and EOS rows.
    Hierarchical { tree: TreeLstm, special: ParamId },
}

/// Recurrent state carried across windows, one `(h, c)` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    pub layers: Vec<(Tensor, Tensor)>,
}

#[derive(Clone, Debug)]
pub struct LmModel {
    pub cfg: LmConfig,
    pub store: ParamStore,
    pub vocab: CharVocab,
    pub input: LmInput,
    pub core: StackedLstm,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: LmConfig,
    vocab: CharVocab,
    leaves: Option<String>,
}

/// Output of one window.
pub struct WindowOutput {
    /// `(T·B) × |V|` log-probabilities, time-major.
    pub log_probs: Var,
    pub last: Vec<LstmState>,
}

/// Glyph tree for a character. Training characters the table does not
/// know become their own leaf; other unknown characters get none.
pub fn char_tree(rules: &RuleTable, vocab: &CharVocab, c: char) -> Option<GlyphTree> {
    if rules.knows(c) {
        rules.decompose(c, DEFAULT_MAX_DEPTH).ok()
    } else if vocab.contains(c) {
        Some(GlyphTree::leaf(c))
    } else {
        None
    }
}

impl LmModel {
    /// Hierarchical models need `rules` to collect the leaf inventory.
    pub fn new(cfg: &LmConfig, vocab: CharVocab, rules: Option<&RuleTable>) -> Result<LmModel, LmError> {
        let leaves = match cfg.embedding {
            EmbeddingKind::Lookup => None,
            EmbeddingKind::Hierarchical => {
                let rules = rules.ok_or_else(|| LmError::Data("hierarchical embeddings need a rule table".into()))?;
                let trees: Vec<GlyphTree> = vocab.chars().iter().filter_map(|&c| char_tree(rules, &vocab, c)).collect();
                Some(Vocab::from_trees(&trees))
            }
        };
        LmModel::build(cfg, vocab, leaves)
    }

    fn build(cfg: &LmConfig, vocab: CharVocab, leaves: Option<Vocab>) -> Result<LmModel, LmError> {
        if cfg.layers.is_empty() || cfg.layers.contains(&0) || cfg.embed_dim == 0 {
            return Err(LmError::Data("layer and embedding sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let input = match leaves {
            None => LmInput::Lookup { table: store.add_embedding("lm.embed", vocab.len(), cfg.embed_dim, &mut rng) },
            Some(leaves) => {
                let tcfg = TreeLstmConfig {
                    input_dim: cfg.tree_input_dim,
                    hidden: cfg.embed_dim,
                    bias: true,
                    use_operators: true,
                };
                let tree = TreeLstm::new(&mut store, "lm.tree", leaves, tcfg, &mut rng);
                let special = store.add_embedding("lm.special", 2, cfg.embed_dim, &mut rng);
                LmInput::Hierarchical { tree, special }
            }
        };
        let core = StackedLstm::new(&mut store, "lm.rnn", cfg.embed_dim, &cfg.layers, &mut rng);
        let out_w = store.add_weight("lm.out.w", core.output_dim(), vocab.len(), &mut rng);
        let out_b = store.add_bias("lm.out.b", vocab.len());
        Ok(LmModel { cfg: cfg.clone(), store, vocab, input, core, out_w, out_b })
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self.input, LmInput::Hierarchical { .. })
    }

    /// What the input layer sees for a stream symbol: out-of-vocabulary
    /// characters become UNK unless a hierarchical model can compose them.
    pub fn input_sym(&self, s: Sym, rules: Option<&RuleTable>) -> Sym {
        match (s, &self.input) {
            (Sym::Char(c), LmInput::Lookup { .. }) if !self.vocab.contains(c) => Sym::Unk,
            (Sym::Char(c), LmInput::Hierarchical { .. }) => {
                let composable = self.vocab.contains(c) || rules.is_some_and(|r| r.knows(c));
                if composable {
                    s
                } else {
                    Sym::Unk
                }
            }
            _ => s,
        }
    }

    /// Input vectors for a `T × B` grid of (already mapped) input symbols.
    ///
    /// Hierarchical models run the treeLSTM only over the distinct
    /// characters of the grid, or read them from `cache` when given.
    pub fn embed_steps(
        &self,
        tape: &mut Tape,
        steps: &[Vec<Sym>],
        rules: Option<&RuleTable>,
        cache: Option<&EmbeddingCache>,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Vec<Var>, LmError> {
        let mut out = Vec::with_capacity(steps.len());
        match &self.input {
            LmInput::Lookup { table } => {
                let table = tape.param(*table);
                for row in steps {
                    let picks = row.iter().map(|&s| Some((0, self.vocab.index(s)))).collect();
                    out.push(tape.gather(&[table], picks)?);
                }
            }
            LmInput::Hierarchical { tree, special } => {
                let mut slots: BTreeMap<char, usize> = BTreeMap::new();
                for s in steps.iter().flatten() {
                    if let Sym::Char(c) = s {
                        let n = slots.len();
                        slots.entry(*c).or_insert(n);
                    }
                }
                let special = tape.param(*special);
                let mut sources = vec![special];
                if !slots.is_empty() {
                    let order: Vec<char> = {
                        let mut v = vec!['\0'; slots.len()];
                        for (&c, &i) in &slots {
                            v[i] = c;
                        }
                        v
                    };
                    let composed = match cache {
                        Some(cache) => {
                            let mut data = Vec::with_capacity(order.len() * self.cfg.embed_dim);
                            for c in &order {
                                let row = cache
                                    .get(*c)
                                    .ok_or_else(|| LmError::Data(format!("embedding cache has no entry for {c}")))?;
                                data.extend_from_slice(row);
                            }
                            tape.constant(Tensor::matrix(order.len(), self.cfg.embed_dim, data)?)
                        }
                        None => {
                            let rules = rules.ok_or_else(|| LmError::Data("hierarchical input needs a rule table".into()))?;
                            let trees = order
                                .iter()
                                .map(|&c| {
                                    char_tree(rules, &self.vocab, c)
                                        .ok_or_else(|| LmError::Data(format!("{c} has no glyph tree")))
                                })
                                .collect::<Result<Vec<_>, _>>()?;
                            let refs: Vec<&GlyphTree> = trees.iter().collect();
                            tree.batch_forward(tape, &refs, None)?.roots
                        }
                    };
                    sources.push(composed);
                }
                for row in steps {
                    let picks: Vec<Pick> = row
                        .iter()
                        .map(|s| {
                            Some(match s {
                                Sym::Unk => (0, 0),
                                Sym::Eos => (0, 1),
                                Sym::Char(c) => (1, slots[c]),
                            })
                        })
                        .collect();
                    out.push(tape.gather(&sources, picks)?);
                }
            }
        }
        if let Some(d) = dropout.as_deref_mut() {
            out = out.into_iter().map(|v| d.apply(tape, v)).collect::<Result<_, _>>()?;
        }
        Ok(out)
    }

    /// Runs the recurrent core and output layer over one window.
    pub fn window(
        &self,
        tape: &mut Tape,
        xs: &[Var],
        init: Option<&LmState>,
        mut hidden_dropout: Option<&mut Dropout>,
        output_dropout: Option<&mut Dropout>,
    ) -> Result<WindowOutput, LmError> {
        let init: Option<Vec<LstmState>> = init.map(|s| {
            s.layers
                .iter()
                .map(|(h, c)| LstmState { h: tape.constant(h.clone()), c: tape.constant(c.clone()) })
                .collect()
        });
        let run = self.core.run(tape, xs, None, init.as_deref(), hidden_dropout.as_deref_mut())?;
        let b = tape.value(xs[0]).rows();
        let picks: Vec<Pick> = (0..run.outputs.len()).flat_map(|t| (0..b).map(move |r| Some((t, r)))).collect();
        let mut stacked = tape.gather(&run.outputs, picks)?;
        if let Some(d) = output_dropout {
            stacked = d.apply(tape, stacked)?;
        }
        let w = tape.param(self.out_w);
        let bias = tape.param(self.out_b);
        let logits = tape.matmul(stacked, w)?;
        let logits = tape.add_row(logits, bias)?;
        Ok(WindowOutput { log_probs: tape.log_softmax(logits), last: run.last })
    }

    pub fn state_of(tape: &Tape, last: &[LstmState]) -> LmState {
        LmState { layers: last.iter().map(|s| (tape.value(s.h).clone(), tape.value(s.c).clone())).collect() }
    }

    /// Next-symbol distribution after reading `s`.
    pub fn step(
        &self,
        s: Sym,
        state: Option<&LmState>,
        rules: Option<&RuleTable>,
        cache: Option<&EmbeddingCache>,
    ) -> Result<(Vec<f64>, LmState), LmError> {
        let mut tape = Tape::new(&self.store);
        let x = self.embed_steps(&mut tape, &[vec![self.input_sym(s, rules)]], rules, cache, None)?;
        let out = self.window(&mut tape, &x, state, None, None)?;
        let probs = tape.value(out.log_probs).data().iter().map(|v| v.exp()).collect();
        Ok((probs, Self::state_of(&tape, &out.last)))
    }

    /// Greedy continuation of `context` (which should start after an EOS).
    pub fn greedy(&self, context: &[Sym], n: usize, rules: Option<&RuleTable>) -> Result<Vec<Sym>, LmError> {
        let (mut probs, mut state) = self.step(Sym::Eos, None, rules, None)?;
        for &s in context {
            (probs, state) = self.step(s, Some(&state), rules, None)?;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let next = self.vocab.sym(crate::pron::argmax(&probs));
            out.push(next);
            (probs, state) = self.step(next, Some(&state), rules, None)?;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        let leaves = match &self.input {
            LmInput::Lookup { .. } => None,
            LmInput::Hierarchical { tree, .. } => Some(tree.embeds.vocab.leaf_chars().into_iter().collect()),
        };
        let manifest = Manifest { config: self.cfg.clone(), vocab: self.vocab.clone(), leaves };
        let json = serde_json::to_value(&manifest).map_err(|e| LmError::Data(e.to_string()))?;
        write_checkpoint(path, &self.store, &json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LmModel, LmError> {
        let (store, json) = read_checkpoint(path)?;
        let m: Manifest = serde_json::from_value(json).map_err(|e| LmError::Data(format!("checkpoint manifest: {e}")))?;
        let leaves = m.leaves.map(|s| Vocab::new(s.chars()));
        let mut model = LmModel::build(&m.config, m.vocab, leaves)?;
        model.store.load_from(&store)?;
        Ok(model)
    }
}

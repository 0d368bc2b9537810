//! Logograph encoders: a binary tree-structured LSTM over glyph trees, and
//! LSTM, biLSTM and CNN baselines over linearized trees.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{dropout_mask, AutodiffError, ParamStore, Tape, Var};
use crate::ids::{strip_operators, GlyphTree, LinearOrder, SeqToken};

mod cnn;
mod lstm;
mod treelstm;
mod vocab;

pub use cnn::Cnn;
pub use lstm::{LstmLayer, LstmRun, LstmState, SeqEncoding, SeqLstm, StackedLstm};
pub use treelstm::{
    build_level_schedule, LevelSchedule, NodeState, TreeBatch, TreeBlock, TreeForward, TreeGate, TreeLstm,
    TreeLstmConfig,
};
pub use vocab::{Vocab, VocabEmbeddings};

/// Training-time inverted dropout with its own random stream.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

impl Dropout<'_> {
    pub fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var, AutodiffError> {
        if self.rate == 0.0 {
            return Ok(v);
        }
        let shape = tape.value(v).shape().to_vec();
        let mask = dropout_mask(&shape, self.rate, &mut self.rng, true)?;
        tape.mul_const(v, mask)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    #[serde(rename = "treelstm")]
    TreeLstm,
    #[serde(rename = "lstm1")]
    Lstm1,
    #[serde(rename = "lstm2")]
    Lstm2,
    #[serde(rename = "bilstm1")]
    BiLstm1,
    #[serde(rename = "bilstm2")]
    BiLstm2,
    #[serde(rename = "cnn")]
    Cnn,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 6] = [
        EncoderKind::Lstm1,
        EncoderKind::Lstm2,
        EncoderKind::BiLstm1,
        EncoderKind::BiLstm2,
        EncoderKind::Cnn,
        EncoderKind::TreeLstm,
    ];

    /// Row label for reports.
    pub fn label(self) -> &'static str {
        match self {
            EncoderKind::TreeLstm => "treeLSTM",
            EncoderKind::Lstm1 => "LSTM 1-layer",
            EncoderKind::Lstm2 => "LSTM 2-layer",
            EncoderKind::BiLstm1 => "biLSTM 1-layer",
            EncoderKind::BiLstm2 => "biLSTM 2-layer",
            EncoderKind::Cnn => "CNN",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            EncoderKind::TreeLstm => "treelstm",
            EncoderKind::Lstm1 => "lstm1",
            EncoderKind::Lstm2 => "lstm2",
            EncoderKind::BiLstm1 => "bilstm1",
            EncoderKind::BiLstm2 => "bilstm2",
            EncoderKind::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| format!("unknown encoder `{s}` (expected one of treelstm, lstm1, lstm2, bilstm1, bilstm2, cnn)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub hidden: usize,
    /// Linearization for the sequence encoders.
    pub order: LinearOrder,
    pub use_operators: bool,
    /// Per-gate biases in the tree cell.
    pub tree_bias: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::TreeLstm,
            input_dim: 64,
            hidden: 256,
            order: LinearOrder::Pre,
            use_operators: true,
            tree_bias: true,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Encoder {
    Tree(TreeLstm),
    Seq(SeqLstm),
    Cnn(Cnn),
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &EncoderConfig, vocab: Vocab, rng: &mut R) -> Encoder {
        let (d, h) = (cfg.input_dim, cfg.hidden);
        match cfg.kind {
            EncoderKind::TreeLstm => {
                let tc = TreeLstmConfig { input_dim: d, hidden: h, bias: cfg.tree_bias, use_operators: cfg.use_operators };
                Encoder::Tree(TreeLstm::new(store, "enc", vocab, tc, rng))
            }
            EncoderKind::Lstm1 => Encoder::Seq(SeqLstm::new(store, "enc", vocab, d, h, 1, false, rng)),
            EncoderKind::Lstm2 => Encoder::Seq(SeqLstm::new(store, "enc", vocab, d, h, 2, false, rng)),
            EncoderKind::BiLstm1 => Encoder::Seq(SeqLstm::new(store, "enc", vocab, d, h, 1, true, rng)),
            EncoderKind::BiLstm2 => Encoder::Seq(SeqLstm::new(store, "enc", vocab, d, h, 2, true, rng)),
            EncoderKind::Cnn => Encoder::Cnn(Cnn::new(store, "enc", vocab, d, Cnn::FILTERS, h, rng)),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Tree(t) => t.output_dim(),
            Encoder::Seq(s) => s.output_dim(),
            Encoder::Cnn(c) => c.output_dim,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            Encoder::Tree(t) => &t.embeds.vocab,
            Encoder::Seq(s) => &s.embeds.vocab,
            Encoder::Cnn(c) => &c.embeds.vocab,
        }
    }

    /// Token sequence fed to a sequence encoder for `tree`.
    pub fn linearize(tree: &GlyphTree, order: LinearOrder, use_operators: bool) -> Vec<SeqToken> {
        let seq = tree.linearize(order);
        if use_operators {
            seq
        } else {
            strip_operators(&seq)
        }
    }

    /// Embeds a batch of trees; one row per tree.
    pub fn encode(
        &self,
        tape: &mut Tape,
        trees: &[&GlyphTree],
        cfg: &EncoderConfig,
        dropout: Option<&mut Dropout>,
    ) -> Result<Var, AutodiffError> {
        match self {
            Encoder::Tree(t) => Ok(t.batch_forward(tape, trees, dropout)?.roots),
            Encoder::Seq(s) => {
                let seqs: Vec<Vec<SeqToken>> =
                    trees.iter().map(|t| Self::linearize(t, cfg.order, cfg.use_operators)).collect();
                Ok(s.encode(tape, &seqs, dropout)?.embedding)
            }
            Encoder::Cnn(c) => {
                let seqs: Vec<Vec<SeqToken>> =
                    trees.iter().map(|t| Self::linearize(t, cfg.order, cfg.use_operators)).collect();
                c.encode(tape, &seqs, dropout)
            }
        }
    }
}

use rand::Rng;

use super::vocab::{Vocab, VocabEmbeddings};
use super::Dropout;
use crate::autodiff::{AutodiffError, ParamId, ParamStore, Pick, Tape, Tensor, Var};
use crate::ids::SeqToken;

/// One LSTM layer. Gate column blocks are `i, f, o, g`.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

/// Hidden and cell state, one row per sequence.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Per-step outputs of a layer or stack run.
#[derive(Clone, Debug)]
pub struct LstmRun {
    pub outputs: Vec<Var>,
    /// Final state per layer.
    pub last: Vec<LstmState>,
}

impl LstmLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        LstmLayer {
            input_dim,
            hidden,
            w_x: store.add_weight(&format!("{prefix}.w_x"), input_dim, 4 * hidden, rng),
            w_h: store.add_weight(&format!("{prefix}.w_h"), hidden, 4 * hidden, rng),
            b: store.add_bias(&format!("{prefix}.b"), 4 * hidden),
        }
    }

    /// One step. A missing previous state means zeros.
    pub fn cell(&self, tape: &mut Tape, x: Var, prev: Option<LstmState>) -> Result<LstmState, AutodiffError> {
        let h = self.hidden;
        let w_x = tape.param(self.w_x);
        let b = tape.param(self.b);
        let mut pre = tape.matmul(x, w_x)?;
        if let Some(p) = prev {
            let w_h = tape.param(self.w_h);
            let hp = tape.matmul(p.h, w_h)?;
            pre = tape.add(pre, hp)?;
        }
        pre = tape.add_row(pre, b)?;
        let ai = tape.slice_cols(pre, 0..h)?;
        let af = tape.slice_cols(pre, h..2 * h)?;
        let ao = tape.slice_cols(pre, 2 * h..3 * h)?;
        let ag = tape.slice_cols(pre, 3 * h..4 * h)?;
        let i = tape.sigmoid(ai);
        let o = tape.sigmoid(ao);
        let g = tape.tanh(ag);
        let mut c = tape.mul(i, g)?;
        if let Some(p) = prev {
            let f = tape.sigmoid(af);
            let fc = tape.mul(f, p.c)?;
            c = tape.add(c, fc)?;
        }
        let tc = tape.tanh(c);
        let hn = tape.mul(o, tc)?;
        Ok(LstmState { h: hn, c })
    }

    /// Runs over `xs` (one `B × input` matrix per step). Rows whose sequence
    /// has ended (`t ≥ lens[b]`) carry their previous state forward.
    pub fn run(
        &self,
        tape: &mut Tape,
        xs: &[Var],
        lens: Option<&[usize]>,
        init: Option<LstmState>,
    ) -> Result<(Vec<Var>, LstmState), AutodiffError> {
        let mut state = init;
        let mut outputs = Vec::with_capacity(xs.len());
        for (t, &x) in xs.iter().enumerate() {
            let mut next = self.cell(tape, x, state)?;
            if let (Some(lens), Some(prev)) = (lens, state) {
                if lens.iter().any(|&l| l <= t) {
                    let on: Vec<f64> = lens
                        .iter()
                        .flat_map(|&l| std::iter::repeat(if t < l { 1.0 } else { 0.0 }).take(self.hidden))
                        .collect();
                    let off: Vec<f64> = on.iter().map(|m| 1.0 - m).collect();
                    let rows = lens.len();
                    let keep = |tape: &mut Tape, new: Var, old: Var| -> Result<Var, AutodiffError> {
                        let a = tape.mul_const(new, Tensor::matrix(rows, self.hidden, on.clone())?)?;
                        let b = tape.mul_const(old, Tensor::matrix(rows, self.hidden, off.clone())?)?;
                        tape.add(a, b)
                    };
                    next = LstmState { h: keep(tape, next.h, prev.h)?, c: keep(tape, next.c, prev.c)? };
                }
            }
            outputs.push(next.h);
            state = Some(next);
        }
        let last = state.ok_or_else(|| AutodiffError::Contract("LSTM over an empty sequence".into()))?;
        Ok((outputs, last))
    }
}

/// Layers where layer `k+1` reads the full output sequence of layer `k`.
#[derive(Clone, Debug)]
pub struct StackedLstm {
    pub layers: Vec<LstmLayer>,
}

impl StackedLstm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input_dim: usize, sizes: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut d = input_dim;
        for (k, &h) in sizes.iter().enumerate() {
            layers.push(LstmLayer::new(store, &format!("{prefix}.l{k}"), d, h, rng));
            d = h;
        }
        StackedLstm { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }

    /// `between` is applied to each layer's outputs before the next layer.
    pub fn run(
        &self,
        tape: &mut Tape,
        xs: &[Var],
        lens: Option<&[usize]>,
        init: Option<&[LstmState]>,
        mut between: Option<&mut Dropout>,
    ) -> Result<LstmRun, AutodiffError> {
        let mut seq = xs.to_vec();
        let mut last = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                if let Some(d) = between.as_deref_mut() {
                    seq = seq.into_iter().map(|v| d.apply(tape, v)).collect::<Result<_, _>>()?;
                }
            }
            let (out, st) = layer.run(tape, &seq, lens, init.map(|s| s[k]))?;
            seq = out;
            last.push(st);
        }
        Ok(LstmRun { outputs: seq, last })
    }
}

/// LSTM or biLSTM over linearized glyph trees; the embedding is the final
/// hidden state (concatenated across directions for the bidirectional case).
#[derive(Clone, Debug)]
pub struct SeqLstm {
    pub embeds: VocabEmbeddings,
    pub forward: StackedLstm,
    pub backward: Option<StackedLstm>,
}

/// Output of [`SeqLstm::encode`].
#[derive(Clone, Debug)]
pub struct SeqEncoding {
    pub embedding: Var,
    /// Top-layer forward hidden states per step.
    pub steps: Vec<Var>,
}

impl SeqLstm {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        vocab: Vocab,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        bidirectional: bool,
        rng: &mut R,
    ) -> SeqLstm {
        let embeds = VocabEmbeddings::new(store, &format!("{prefix}.embed"), vocab, input_dim, rng);
        let sizes = vec![hidden; layers];
        let forward = StackedLstm::new(store, &format!("{prefix}.fwd"), input_dim, &sizes, rng);
        let backward = bidirectional.then(|| StackedLstm::new(store, &format!("{prefix}.bwd"), input_dim, &sizes, rng));
        SeqLstm { embeds, forward, backward }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.output_dim() * if self.backward.is_some() { 2 } else { 1 }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        seqs: &[Vec<SeqToken>],
        dropout: Option<&mut Dropout>,
    ) -> Result<SeqEncoding, AutodiffError> {
        if seqs.is_empty() || seqs.iter().any(Vec::is_empty) {
            return Err(AutodiffError::Contract("LSTM encoder needs non-empty sequences".into()));
        }
        let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
        let offsets: Vec<usize> = lens.iter().scan(0, |acc, &l| { let o = *acc; *acc += l; Some(o) }).collect();
        let tokens: Vec<Option<SeqToken>> = seqs.iter().flatten().map(|&t| Some(t)).collect();
        let mut x_all = self.embeds.lookup(tape, &tokens)?;
        if let Some(d) = dropout {
            x_all = d.apply(tape, x_all)?;
        }
        let t_max = *lens.iter().max().unwrap();
        let ragged = lens.iter().any(|&l| l != t_max);
        let step_inputs = |tape: &mut Tape, reverse: bool| -> Result<Vec<Var>, AutodiffError> {
            (0..t_max)
                .map(|t| {
                    let picks: Vec<Pick> = lens
                        .iter()
                        .zip(&offsets)
                        .map(|(&l, &o)| (t < l).then(|| (0, o + if reverse { l - 1 - t } else { t })))
                        .collect();
                    tape.gather(&[x_all], picks)
                })
                .collect()
        };
        let mask = ragged.then_some(&lens[..]);
        let xs = step_inputs(tape, false)?;
        let fwd = self.forward.run(tape, &xs, mask, None, None)?;
        let mut embedding = fwd.last.last().unwrap().h;
        if let Some(bwd) = &self.backward {
            let xs = step_inputs(tape, true)?;
            let b = bwd.run(tape, &xs, mask, None, None)?;
            embedding = tape.concat_cols(&[embedding, b.last.last().unwrap().h])?;
        }
        Ok(SeqEncoding { embedding, steps: fwd.outputs })
    }
}

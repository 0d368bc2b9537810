use rand::Rng;

use super::vocab::{Vocab, VocabEmbeddings};
use super::Dropout;
use crate::autodiff::{AutodiffError, ParamId, ParamStore, Pick, Tape, Var};
use crate::ids::SeqToken;

/// Parallel 1-D convolution banks of widths `1..=max_width`, each max-pooled
/// over positions, concatenated and projected by one affine layer.
#[derive(Clone, Debug)]
pub struct Cnn {
    pub embeds: VocabEmbeddings,
    pub filters: usize,
    /// `(kernel, bias)` per width; kernel is `width·D × filters`.
    pub banks: Vec<(ParamId, ParamId)>,
    pub fc_w: ParamId,
    pub fc_b: ParamId,
    pub output_dim: usize,
}

impl Cnn {
    pub const MAX_WIDTH: usize = 7;
    pub const FILTERS: usize = 200;

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        vocab: Vocab,
        input_dim: usize,
        filters: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Cnn {
        let embeds = VocabEmbeddings::new(store, &format!("{prefix}.embed"), vocab, input_dim, rng);
        let banks = (1..=Self::MAX_WIDTH)
            .map(|w| {
                (
                    store.add_weight(&format!("{prefix}.conv{w}.w"), w * input_dim, filters, rng),
                    store.add_bias(&format!("{prefix}.conv{w}.b"), filters),
                )
            })
            .collect();
        let fc_w = store.add_weight(&format!("{prefix}.fc.w"), Self::MAX_WIDTH * filters, output_dim, rng);
        let fc_b = store.add_bias(&format!("{prefix}.fc.b"), output_dim);
        Cnn { embeds, filters, banks, fc_w, fc_b, output_dim }
    }

    /// Sequences shorter than the widest kernel are padded with zero vectors.
    pub fn encode(
        &self,
        tape: &mut Tape,
        seqs: &[Vec<SeqToken>],
        dropout: Option<&mut Dropout>,
    ) -> Result<Var, AutodiffError> {
        if seqs.is_empty() {
            return Err(AutodiffError::Contract("empty CNN batch".into()));
        }
        let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
        let offsets: Vec<usize> = lens.iter().scan(0, |acc, &l| { let o = *acc; *acc += l; Some(o) }).collect();
        let tokens: Vec<Option<SeqToken>> = seqs.iter().flatten().map(|&t| Some(t)).collect();
        // A trailing zero row keeps the gather source non-empty for all-padding input.
        let mut x_all = self.embeds.lookup(tape, &[tokens, vec![None]].concat())?;
        if let Some(d) = dropout {
            x_all = d.apply(tape, x_all)?;
        }
        let padded: Vec<usize> = lens.iter().map(|&l| l.max(Self::MAX_WIDTH)).collect();
        let mut pooled = Vec::with_capacity(self.banks.len());
        for (w, &(kernel, bias)) in (1..).zip(&self.banks) {
            let positions: Vec<usize> = padded.iter().map(|&p| p - w + 1).collect();
            let mut cols = Vec::with_capacity(w);
            for k in 0..w {
                let mut picks: Vec<Pick> = Vec::new();
                for (b, &np) in positions.iter().enumerate() {
                    for p in 0..np {
                        let pos = p + k;
                        picks.push((pos < lens[b]).then(|| (0, offsets[b] + pos)));
                    }
                }
                cols.push(tape.gather(&[x_all], picks)?);
            }
            let windows = tape.concat_cols(&cols)?;
            let kv = tape.param(kernel);
            let bv = tape.param(bias);
            let resp = tape.matmul(windows, kv)?;
            let resp = tape.add_row(resp, bv)?;
            pooled.push(tape.segment_max(resp, &positions)?);
        }
        let cat = tape.concat_cols(&pooled)?;
        let fw = tape.param(self.fc_w);
        let fb = tape.param(self.fc_b);
        let out = tape.matmul(cat, fw)?;
        tape.add_row(out, fb)
    }
}

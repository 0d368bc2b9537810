use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Pick, Tape, Var};
use crate::ids::{GlyphTree, Idc, Leaf, SeqToken};

/// Token inventory for encoder inputs: UNK, the ten binary IDCs, then the
/// known leaf characters in codepoint order.
#[derive(Clone, Debug)]
pub struct Vocab {
    rows: HashMap<SeqToken, usize>,
    tokens: Vec<SeqToken>,
}

impl Vocab {
    pub const UNK_ROW: usize = 0;

    pub fn new(leaves: impl IntoIterator<Item = char>) -> Vocab {
        let leaves: BTreeSet<char> = leaves.into_iter().collect();
        let mut tokens = vec![SeqToken::Leaf(Leaf::Unk)];
        tokens.extend(Idc::ALL.iter().map(|&i| SeqToken::Op(i)));
        tokens.extend(leaves.into_iter().map(|c| SeqToken::Leaf(Leaf::Char(c))));
        let rows = tokens.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        Vocab { rows, tokens }
    }

    /// Vocabulary over every leaf character occurring in `trees`.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a GlyphTree>) -> Vocab {
        let mut leaves = BTreeSet::new();
        for t in trees {
            for l in t.leaves() {
                if let Leaf::Char(c) = l {
                    leaves.insert(c);
                }
            }
        }
        Vocab::new(leaves)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Row of `tok`; unknown leaves map to UNK.
    pub fn row(&self, tok: SeqToken) -> usize {
        self.rows.get(&tok).copied().unwrap_or(Self::UNK_ROW)
    }

    pub fn contains(&self, tok: SeqToken) -> bool {
        self.rows.contains_key(&tok)
    }

    pub fn token(&self, row: usize) -> SeqToken {
        self.tokens[row]
    }

    /// Leaf characters in row order.
    pub fn leaf_chars(&self) -> Vec<char> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                SeqToken::Leaf(Leaf::Char(c)) => Some(*c),
                _ => None,
            })
            .collect()
    }
}

/// Embedding table over a [`Vocab`].
#[derive(Clone, Debug)]
pub struct VocabEmbeddings {
    pub vocab: Vocab,
    pub table: ParamId,
    pub dim: usize,
}

impl VocabEmbeddings {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, vocab: Vocab, dim: usize, rng: &mut R) -> Self {
        let table = store.add_embedding(name, vocab.len(), dim, rng);
        VocabEmbeddings { vocab, table, dim }
    }

    /// One row per entry; `None` yields a zero row (padding).
    pub fn lookup(&self, tape: &mut Tape, tokens: &[Option<SeqToken>]) -> Result<Var, AutodiffError> {
        let table = tape.param(self.table);
        let picks: Vec<Pick> = tokens.iter().map(|t| t.map(|t| (0, self.vocab.row(t)))).collect();
        tape.gather(&[table], picks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_and_unk() {
        let v = Vocab::new(['木', '一', '木']);
        assert_eq!(v.len(), 1 + 10 + 2);
        assert_eq!(v.row(SeqToken::Leaf(Leaf::Unk)), 0);
        assert_eq!(v.row(SeqToken::Op(Idc::LeftToRight)), 1);
        assert_eq!(v.row(SeqToken::Leaf(Leaf::Char('一'))), 11);
        assert_eq!(v.row(SeqToken::Leaf(Leaf::Char('火'))), 0);
        assert_eq!(v.leaf_chars(), vec!['一', '木']);
    }

    #[test]
    fn lookup_pads_with_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let e = VocabEmbeddings::new(&mut s, "emb", Vocab::new(['一']), 3, &mut rng);
        let mut t = Tape::new(&s);
        let x = e.lookup(&mut t, &[Some(SeqToken::Leaf(Leaf::Char('一'))), None]).unwrap();
        assert_eq!(t.value(x).row_slice(0), s.get(e.table).row_slice(11));
        assert_eq!(t.value(x).row_slice(1), &[0.0; 3]);
    }
}

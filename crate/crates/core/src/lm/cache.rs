use std::collections::{BTreeSet, HashMap};

use log::debug;

use super::model::{char_tree, LmInput, LmModel};
use super::LmError;
use crate::autodiff::Tape;
use crate::ids::{GlyphTree, RuleTable};

const CHUNK: usize = 128;

/// Composed character vectors for evaluation, valid for one parameter
/// version of one model.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingCache {
    stamp: Option<u64>,
    rows: HashMap<char, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new() -> EmbeddingCache {
        EmbeddingCache::default()
    }

    /// One treeLSTM forward per distinct composable character.
    pub fn build(model: &LmModel, chars: impl IntoIterator<Item = char>, rules: &RuleTable) -> Result<EmbeddingCache, LmError> {
        let mut cache = EmbeddingCache { stamp: Some(model.store.version()), rows: HashMap::new() };
        cache.extend(model, chars, rules)?;
        Ok(cache)
    }

    pub fn is_fresh(&self, model: &LmModel) -> bool {
        self.stamp == Some(model.store.version())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, c: char) -> Option<&[f64]> {
        self.rows.get(&c).map(Vec::as_slice)
    }

    /// Rebuilds when stale and fills in missing characters; returns whether
    /// a rebuild happened.
    pub fn ensure(&mut self, model: &LmModel, chars: impl IntoIterator<Item = char>, rules: &RuleTable) -> Result<bool, LmError> {
        let stale = !self.is_fresh(model);
        if stale {
            debug!("embedding cache stale, rebuilding");
            self.rows.clear();
            self.stamp = Some(model.store.version());
        }
        self.extend(model, chars, rules)?;
        Ok(stale)
    }

    fn extend(&mut self, model: &LmModel, chars: impl IntoIterator<Item = char>, rules: &RuleTable) -> Result<(), LmError> {
        let LmInput::Hierarchical { tree, .. } = &model.input else {
            return Err(LmError::Data("embedding cache applies to hierarchical models only".into()));
        };
        let todo: BTreeSet<char> = chars.into_iter().filter(|c| !self.rows.contains_key(c)).collect();
        let items: Vec<(char, GlyphTree)> =
            todo.into_iter().filter_map(|c| char_tree(rules, &model.vocab, c).map(|t| (c, t))).collect();
        for chunk in items.chunks(CHUNK) {
            let mut tape = Tape::new(&model.store);
            let refs: Vec<&GlyphTree> = chunk.iter().map(|(_, t)| t).collect();
            let roots = tree.batch_forward(&mut tape, &refs, None)?.roots;
            let m = tape.value(roots);
            for (i, (c, _)) in chunk.iter().enumerate() {
                self.rows.insert(*c, m.row_slice(i).to_vec());
            }
        }
        Ok(())
    }
}

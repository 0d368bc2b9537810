use log::warn;
use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::autodiff::Tape;
use crate::ids::{GlyphTree, RuleTable, DEFAULT_MAX_DEPTH};
use crate::lm::{LmInput, LmModel};
use crate::pron::PronModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub ch: char,
    pub similarity: f64,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top `k` characters by cosine similarity to `query`, excluding the query.
/// Ties go to the lower codepoint; zero vectors are skipped with a warning.
pub fn nearest_neighbors(table: &[(char, Vec<f64>)], query: char, k: usize) -> Result<Vec<Neighbor>, DiagError> {
    if k == 0 {
        return Err(DiagError::Data("k must be at least 1".into()));
    }
    let q = &table
        .iter()
        .find(|(c, _)| *c == query)
        .ok_or_else(|| DiagError::Data(format!("{query} has no embedding")))?
        .1;
    if norm(q) == 0.0 {
        return Err(DiagError::Data(format!("{query} has a zero embedding")));
    }
    let mut out = Vec::with_capacity(table.len());
    for (c, v) in table {
        if *c == query {
            continue;
        }
        if norm(v) == 0.0 {
            warn!("{c} has a zero embedding; skipped");
            continue;
        }
        out.push(Neighbor { ch: *c, similarity: cosine(q, v) });
    }
    out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.ch.cmp(&b.ch)));
    out.truncate(k);
    Ok(out)
}

/// Composed embeddings of a pronunciation model for `chars`.
pub fn pron_embeddings(model: &PronModel, chars: &[char], rules: &RuleTable) -> Result<Vec<(char, Vec<f64>)>, DiagError> {
    let trees: Vec<GlyphTree> = chars.iter().map(|&c| rules.decompose(c, DEFAULT_MAX_DEPTH)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(chars.len());
    for (cs, ts) in chars.chunks(model.cfg.batch_size.max(1)).zip(trees.chunks(model.cfg.batch_size.max(1))) {
        let mut tape = Tape::new(&model.store);
        let refs: Vec<&GlyphTree> = ts.iter().collect();
        let h = model.embed(&mut tape, &refs, None)?;
        let m = tape.value(h);
        out.extend(cs.iter().enumerate().map(|(i, &c)| (c, m.row_slice(i).to_vec())));
    }
    Ok(out)
}

/// Input embeddings of a language model for its training characters:
/// table rows for lookup models, composed vectors for hierarchical ones.
pub fn lm_embeddings(model: &LmModel, rules: Option<&RuleTable>) -> Result<Vec<(char, Vec<f64>)>, DiagError> {
    match &model.input {
        LmInput::Lookup { table } => {
            let t = model.store.get(*table);
            Ok(model.vocab.chars().iter().enumerate().map(|(i, &c)| (c, t.row_slice(i + 2).to_vec())).collect())
        }
        LmInput::Hierarchical { .. } => {
            let rules = rules.ok_or_else(|| DiagError::Data("hierarchical embeddings need a rule table".into()))?;
            let cache = crate::lm::EmbeddingCache::build(model, model.vocab.chars().iter().copied(), rules)?;
            Ok(model.vocab.chars().iter().filter_map(|&c| cache.get(c).map(|v| (c, v.to_vec()))).collect())
        }
    }
}

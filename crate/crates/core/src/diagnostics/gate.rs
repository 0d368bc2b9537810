use std::fmt;

use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::autodiff::Tape;
use crate::encoders::Encoder;
use crate::ids::{GlyphTree, Idc};
use crate::pron::PronModel;

const CHUNK: usize = 128;

/// Root forget-gate comparison over left-right compounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateBiasReport {
    /// Trees whose root operator is ⿰.
    pub total: usize,
    /// Of those, trees with `‖f_r‖₂ > ‖f_l‖₂` at the root.
    pub prefer_right: usize,
    /// `None` when `total` is 0.
    pub percent: Option<f64>,
}

impl fmt::Display for GateBiasReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.percent {
            Some(p) => write!(f, "{} of {} prefer right ({p:.1}%)", self.prefer_right, self.total),
            None => write!(f, "0 of 0 prefer right (n/a)"),
        }
    }
}

/// Per-tree root gate norms `(‖f_l‖₂, ‖f_r‖₂)`, in input order.
pub fn root_gate_norms(model: &PronModel, trees: &[&GlyphTree]) -> Result<Vec<(f64, f64)>, DiagError> {
    let Encoder::Tree(tree) = &model.encoder else {
        return Err(DiagError::Contract(format!("gate statistics need a treeLSTM model, not {}", model.cfg.encoder.label())));
    };
    let mut out = Vec::with_capacity(trees.len());
    for chunk in trees.chunks(CHUNK) {
        let mut tape = Tape::new(&model.store);
        let batch = tree.batch_forward(&mut tape, chunk, None)?;
        for t in 0..chunk.len() {
            let (state, pos) = batch.node(batch.schedule.root(t));
            let norm = |v| tape.value(v).row_slice(pos).iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            out.push((norm(state.f_l), norm(state.f_r)));
        }
    }
    Ok(out)
}

/// Counts ⿰-rooted trees whose right forget gate has the larger norm.
/// Exact ties count as not preferring the right.
pub fn gate_bias(model: &PronModel, trees: &[GlyphTree]) -> Result<GateBiasReport, DiagError> {
    if !matches!(model.encoder, Encoder::Tree(_)) {
        return Err(DiagError::Contract(format!("gate statistics need a treeLSTM model, not {}", model.cfg.encoder.label())));
    }
    let lr: Vec<&GlyphTree> =
        trees.iter().filter(|t| matches!(t, GlyphTree::Op { idc: Idc::LeftToRight, .. })).collect();
    let norms = root_gate_norms(model, &lr)?;
    let prefer_right = norms.iter().filter(|(l, r)| r > l).count();
    let total = norms.len();
    let percent = (total > 0).then(|| prefer_right as f64 / total as f64 * 100.0);
    Ok(GateBiasReport { total, prefer_right, percent })
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::autodiff::{Tape, Var};
use crate::encoders::Encoder;
use crate::ids::{GlyphTree, SeqToken};
use crate::pron::{PronModel, Prediction};

/// One probed node (tree encoder) or time step (sequence encoder).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub node: usize,
    /// Leaf character, or the character an operator node expands (the
    /// operator itself for synthetic nodes).
    pub label: String,
    pub h: Vec<f64>,
    pub prediction: Prediction,
}

/// Rows in evaluation order; the last row is the whole character.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub rows: Vec<ProbeRow>,
}

fn node_label(t: &GlyphTree) -> String {
    match t {
        GlyphTree::Op { source: Some(c), .. } => c.to_string(),
        _ => t.token().to_string(),
    }
}

/// Feeds every intermediate hidden state to the pronunciation head.
///
/// Tree models are probed per node in post-order, unidirectional LSTMs per
/// step of the linearized sequence.
pub fn probe(model: &PronModel, tree: &GlyphTree) -> Result<ProbeTrace, DiagError> {
    let mut tape = Tape::new(&model.store);
    let (states, labels): (Vec<Var>, Vec<String>) = match &model.encoder {
        Encoder::Tree(enc) => {
            let fwd = enc.forward(&mut tape, tree)?;
            (fwd.nodes.iter().map(|n| n.h).collect(), tree.post_order().into_iter().map(node_label).collect())
        }
        Encoder::Seq(enc) if enc.backward.is_none() => {
            let seq = Encoder::linearize(tree, model.cfg.order, model.cfg.operators);
            let labels = seq.iter().map(|t: &SeqToken| t.to_string()).collect();
            (enc.encode(&mut tape, &[seq], None)?.steps, labels)
        }
        _ => {
            return Err(DiagError::Contract(format!(
                "probing needs a treeLSTM or unidirectional LSTM model, not {}",
                model.cfg.encoder.label()
            )))
        }
    };
    let mut rows = Vec::with_capacity(states.len());
    for (node, (h, label)) in states.into_iter().zip(labels).enumerate() {
        let out = model.head.predict(&mut tape, h)?;
        let prediction = model.decode(&tape, &out).remove(0);
        rows.push(ProbeRow { node, label, h: tape.value(h).data().to_vec(), prediction });
    }
    Ok(ProbeTrace { rows })
}

impl ProbeTrace {
    /// `node,label,onset,nucleus,coda,h0,h1,...`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DiagError> {
        let mut out = csv::Writer::from_writer(w);
        let width = self.rows.first().map_or(0, |r| r.h.len());
        let mut header: Vec<String> = ["node", "label", "onset", "nucleus", "coda"].map(String::from).to_vec();
        header.extend((0..width).map(|i| format!("h{i}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.node.to_string(),
                r.label.clone(),
                r.prediction.onset.clone(),
                r.prediction.nucleus.clone(),
                r.prediction.coda.clone(),
            ];
            rec.extend(r.h.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| DiagError::Data(e.to_string()))?;
        Ok(())
    }
}

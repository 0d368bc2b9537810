use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::phono::{PronEntry, Unit, NULL_MARK};

/// Class labels for one sub-syllabic unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Inventory {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Inventory {
    fn from(classes: Vec<String>) -> Inventory {
        Inventory::from_classes(classes)
    }
}

impl From<Inventory> for Vec<String> {
    fn from(inv: Inventory) -> Vec<String> {
        inv.classes
    }
}

impl Inventory {
    /// Sorted labels, always including the null mark.
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Inventory {
        let mut set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        set.insert(NULL_MARK.to_string());
        Inventory::from_classes(set.into_iter().collect())
    }

    fn from_classes(classes: Vec<String>) -> Inventory {
        let index = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Inventory { classes, index }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.classes[i]
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// Inventories for onset, nucleus and coda.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventories {
    pub onset: Inventory,
    pub nucleus: Inventory,
    pub coda: Inventory,
}

impl Inventories {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a PronEntry>) -> Inventories {
        let entries: Vec<&PronEntry> = entries.into_iter().collect();
        Inventories {
            onset: Inventory::new(entries.iter().map(|e| e.onset.clone())),
            nucleus: Inventory::new(entries.iter().map(|e| e.nucleus.clone())),
            coda: Inventory::new(entries.iter().map(|e| e.coda.clone())),
        }
    }

    pub fn get(&self, u: Unit) -> &Inventory {
        match u {
            Unit::Onset => &self.onset,
            Unit::Nucleus => &self.nucleus,
            Unit::Coda => &self.coda,
        }
    }
}

/// Order in which the chained head predicts the three units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputOrder {
    #[default]
    #[serde(rename = "cd-nu-on")]
    CodaFirst,
    #[serde(rename = "on-nu-cd")]
    OnsetFirst,
}

impl OutputOrder {
    pub fn units(self) -> [Unit; 3] {
        match self {
            OutputOrder::CodaFirst => [Unit::Coda, Unit::Nucleus, Unit::Onset],
            OutputOrder::OnsetFirst => [Unit::Onset, Unit::Nucleus, Unit::Coda],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputOrder::CodaFirst => "cd-nu-on",
            OutputOrder::OnsetFirst => "on-nu-cd",
        }
    }
}

impl std::str::FromStr for OutputOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cd-nu-on" => Ok(OutputOrder::CodaFirst),
            "on-nu-cd" => Ok(OutputOrder::OnsetFirst),
            _ => Err(format!("unknown output order `{s}` (cd-nu-on or on-nu-cd)")),
        }
    }
}

/// Chained softmax classifiers: the k-th unit sees the embedding plus the
/// full probability vectors of the units before it.
///
/// Weights are stored input-major (`in × classes`), i.e. the transpose of the
/// usual `W h` notation.
#[derive(Clone, Debug)]
pub struct PronHead {
    pub order: OutputOrder,
    pub input_dim: usize,
    pub sizes: [usize; 3],
    pub w: [ParamId; 3],
    pub b: Option<[ParamId; 3]>,
}

/// Per-step outputs in chain order.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    pub probs: [Var; 3],
    pub log_probs: [Var; 3],
}

impl PronHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        input_dim: usize,
        inv: &Inventories,
        order: OutputOrder,
        bias: bool,
        rng: &mut R,
    ) -> PronHead {
        let units = order.units();
        let sizes = units.map(|u| inv.get(u).len());
        let mut fan_in = input_dim;
        let mut w = Vec::new();
        for (k, u) in units.iter().enumerate() {
            w.push(store.add_weight(&format!("head.{}.w", u.name()), fan_in, sizes[k], rng));
            fan_in += sizes[k];
        }
        let b = bias.then(|| units.map(|u| store.add_bias(&format!("head.{}.b", u.name()), inv.get(u).len())));
        PronHead { order, input_dim, sizes, w: [w[0], w[1], w[2]], b }
    }

    pub fn predict(&self, tape: &mut Tape, h: Var) -> Result<HeadOutput, AutodiffError> {
        let mut inputs = vec![h];
        let mut probs = Vec::with_capacity(3);
        let mut log_probs = Vec::with_capacity(3);
        for k in 0..3 {
            let x = if inputs.len() == 1 { h } else { tape.concat_cols(&inputs)? };
            let w = tape.param(self.w[k]);
            let mut logits = tape.matmul(x, w)?;
            if let Some(b) = self.b {
                let bv = tape.param(b[k]);
                logits = tape.add_row(logits, bv)?;
            }
            let p = tape.softmax(logits);
            log_probs.push(tape.log_softmax(logits));
            probs.push(p);
            inputs.push(p);
        }
        Ok(HeadOutput { probs: [probs[0], probs[1], probs[2]], log_probs: [log_probs[0], log_probs[1], log_probs[2]] })
    }

    /// Sum of the three cross-entropies, averaged over rows.
    /// `targets[k]` holds class indices for the k-th unit in chain order.
    pub fn loss(&self, tape: &mut Tape, out: &HeadOutput, targets: &[Vec<usize>; 3]) -> Result<Var, AutodiffError> {
        let n = targets[0].len();
        let scale = 1.0 / n as f64;
        let mut total: Option<Var> = None;
        for k in 0..3 {
            let l = tape.nll(out.log_probs[k], &targets[k], scale)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
        }
        Ok(total.unwrap())
    }
}

/// Index of the largest value; the first on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

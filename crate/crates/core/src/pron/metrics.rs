use serde::{Deserialize, Serialize};

use crate::phono::{PronEntry, Unit};

/// Predicted `(onset, nucleus, coda)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub onset: String,
    pub nucleus: String,
    pub coda: String,
}

impl Prediction {
    pub fn unit(&self, u: Unit) -> &str {
        match u {
            Unit::Onset => &self.onset,
            Unit::Nucleus => &self.nucleus,
            Unit::Coda => &self.coda,
        }
    }
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {}", self.onset, self.nucleus, self.coda)
    }
}

/// String and token error rates, in percent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub string_errors: usize,
    pub token_errors: usize,
    /// Errors per unit: onset, nucleus, coda.
    pub unit_errors: [usize; 3],
    pub ser: f64,
    pub ter: f64,
    pub onset: f64,
    pub nucleus: f64,
    pub coda: f64,
}

impl EvalReport {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a Prediction, &'a PronEntry)>) -> EvalReport {
        let mut r = EvalReport::default();
        for (p, gold) in pairs {
            r.count += 1;
            let mut wrong = 0;
            for (k, u) in Unit::ALL.iter().enumerate() {
                if p.unit(*u) != gold.unit(*u) {
                    r.unit_errors[k] += 1;
                    wrong += 1;
                }
            }
            r.token_errors += wrong;
            r.string_errors += usize::from(wrong > 0);
        }
        if r.count > 0 {
            let n = r.count as f64;
            r.ser = 100.0 * r.string_errors as f64 / n;
            r.ter = 100.0 * r.token_errors as f64 / (3.0 * n);
            r.onset = 100.0 * r.unit_errors[0] as f64 / n;
            r.nucleus = 100.0 * r.unit_errors[1] as f64 / n;
            r.coda = 100.0 * r.unit_errors[2] as f64 / n;
        }
        r
    }
}

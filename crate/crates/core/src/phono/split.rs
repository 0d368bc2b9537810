use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::jyutping::{segment_jyutping, Syllable, Unit};
use super::unihan::{classify_script, pick_reading, ScriptClass, VariantMap};
use super::PhonoError;
use crate::ids::RuleTable;

/// One supervised example: a character and its toneless pronunciation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PronEntry {
    pub ch: char,
    pub onset: String,
    pub nucleus: String,
    pub coda: String,
}

impl PronEntry {
    pub fn new(ch: char, syl: Syllable) -> PronEntry {
        PronEntry { ch, onset: syl.onset, nucleus: syl.nucleus, coda: syl.coda }
    }

    pub fn unit(&self, u: Unit) -> &str {
        match u {
            Unit::Onset => &self.onset,
            Unit::Nucleus => &self.nucleus,
            Unit::Coda => &self.coda,
        }
    }
}

/// Segmented corpus with script classes.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub entries: Vec<(PronEntry, ScriptClass)>,
    /// Readings that failed to segment and were dropped.
    pub dropped_readings: usize,
    /// Characters left with no usable reading, or unknown to the rule table.
    pub dropped_chars: usize,
}

impl Corpus {
    /// Picks one reading per character (seeded) and segments it.
    ///
    /// When `rules` is given, characters the table does not know are dropped.
    pub fn build(
        readings: &BTreeMap<char, Vec<String>>,
        variants: &VariantMap,
        rules: Option<&RuleTable>,
        seed: u64,
    ) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut corpus = Corpus::default();
        for (&ch, rs) in readings {
            if rules.is_some_and(|r| !r.knows(ch)) {
                corpus.dropped_chars += 1;
                continue;
            }
            let usable: Vec<String> = rs
                .iter()
                .filter(|r| {
                    let ok = segment_jyutping(r).is_ok();
                    if !ok {
                        corpus.dropped_readings += 1;
                    }
                    ok
                })
                .cloned()
                .collect();
            let Ok(pick) = pick_reading(&usable, &mut rng) else {
                corpus.dropped_chars += 1;
                continue;
            };
            let syl = segment_jyutping(pick).expect("filtered above");
            corpus.entries.push((PronEntry::new(ch, syl), classify_script(ch, variants)));
        }
        corpus
    }

    pub fn count(&self, class: ScriptClass) -> usize {
        self.entries.iter().filter(|(_, c)| *c == class).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Mixed traditional and simplified on both sides.
    Mixed = 1,
    /// Non-simplified training, simplified test.
    NonSimplifiedToSimplified = 2,
    /// Traditional counterparts for training, simplified test.
    TraditionalToSimplified = 3,
}

impl Scenario {
    pub fn from_number(n: u8) -> Option<Scenario> {
        match n {
            1 => Some(Scenario::Mixed),
            2 => Some(Scenario::NonSimplifiedToSimplified),
            3 => Some(Scenario::TraditionalToSimplified),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Partition sizes used in the reference experiments.
    pub fn default_sizes(self) -> SplitSizes {
        match self {
            Scenario::Mixed | Scenario::NonSimplifiedToSimplified => {
                SplitSizes { train: 16000, validation: 2400, test: 2400 }
            }
            Scenario::TraditionalToSimplified => SplitSizes { train: 2302, validation: 200, test: 2400 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" | "valid" | "dev" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub train: Vec<PronEntry>,
    pub validation: Vec<PronEntry>,
    pub test: Vec<PronEntry>,
}

impl DatasetSplit {
    pub fn partition(&self, p: Partition) -> &[PronEntry] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    /// True when no character appears in two partitions.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .all(|e| seen.insert(e.ch))
    }
}

fn take_shuffled(
    pool: &mut Vec<PronEntry>,
    n: usize,
    what: &str,
) -> Result<Vec<PronEntry>, PhonoError> {
    if pool.len() < n {
        return Err(PhonoError::Data(format!("need {n} {what} characters, only {} available", pool.len())));
    }
    Ok(pool.drain(..n).collect())
}

/// Builds one of the three train/validation/test scenarios.
pub fn build_scenario(
    corpus: &Corpus,
    scenario: Scenario,
    sizes: SplitSizes,
    variants: &VariantMap,
    seed: u64,
) -> Result<DatasetSplit, PhonoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let of_class = |pred: &dyn Fn(ScriptClass) -> bool| -> Vec<PronEntry> {
        corpus.entries.iter().filter(|(_, c)| pred(*c)).map(|(e, _)| e.clone()).collect()
    };
    let (train, validation, test) = match scenario {
        Scenario::Mixed => {
            let mut pool = of_class(&|_| true);
            pool.shuffle(&mut rng);
            let test = take_shuffled(&mut pool, sizes.test, "corpus")?;
            let validation = take_shuffled(&mut pool, sizes.validation, "corpus")?;
            let train = take_shuffled(&mut pool, sizes.train, "corpus")?;
            (train, validation, test)
        }
        Scenario::NonSimplifiedToSimplified => {
            let mut simp = of_class(&|c| c == ScriptClass::Simplified);
            let mut rest = of_class(&|c| c != ScriptClass::Simplified);
            simp.shuffle(&mut rng);
            rest.shuffle(&mut rng);
            let test = take_shuffled(&mut simp, sizes.test, "simplified")?;
            let validation = take_shuffled(&mut rest, sizes.validation, "non-simplified")?;
            let train = take_shuffled(&mut rest, sizes.train, "non-simplified")?;
            (train, validation, test)
        }
        Scenario::TraditionalToSimplified => {
            let trad: HashMap<char, PronEntry> = corpus
                .entries
                .iter()
                .filter(|(_, c)| *c == ScriptClass::Traditional)
                .map(|(e, _)| (e.ch, e.clone()))
                .collect();
            let counterparts = |c: char| -> Vec<char> {
                variants.traditional_of(c).into_iter().filter(|t| trad.contains_key(t)).collect()
            };
            let mut simp: Vec<PronEntry> = of_class(&|c| c == ScriptClass::Simplified)
                .into_iter()
                .filter(|e| !counterparts(e.ch).is_empty())
                .collect();
            simp.shuffle(&mut rng);
            let test = take_shuffled(&mut simp, sizes.test, "simplified-with-traditional")?;
            // Counterparts of the test characters first, then of the
            // remaining simplified characters, in listed variant order.
            let mut chosen = Vec::new();
            let mut seen = BTreeSet::new();
            for e in test.iter().chain(simp.iter()) {
                for t in counterparts(e.ch) {
                    if seen.insert(t) {
                        chosen.push(trad[&t].clone());
                    }
                }
            }
            let need = sizes.train + sizes.validation;
            let mut pool = take_shuffled(&mut chosen, need, "traditional-counterpart")?;
            pool.shuffle(&mut rng);
            let validation = take_shuffled(&mut pool, sizes.validation, "traditional-counterpart")?;
            let train = pool;
            (train, validation, test)
        }
    };
    Ok(DatasetSplit { scenario: Some(scenario), seed: Some(seed), train, validation, test })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    char: String,
    onset: String,
    nucleus: String,
    coda: String,
    partition: Partition,
}

/// Writes `char,onset,nucleus,coda,partition` rows.
pub fn write_split_csv(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), PhonoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| PhonoError::Io { path: path.to_path_buf(), source })?;
    let mut w = csv::Writer::from_writer(file);
    for p in [Partition::Train, Partition::Validation, Partition::Test] {
        for e in split.partition(p) {
            w.serialize(CsvRow {
                char: e.ch.to_string(),
                onset: e.onset.clone(),
                nucleus: e.nucleus.clone(),
                coda: e.coda.clone(),
                partition: p,
            })?;
        }
    }
    w.flush().map_err(|source| PhonoError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn read_split_csv(path: impl AsRef<Path>) -> Result<DatasetSplit, PhonoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| PhonoError::Io { path: path.to_path_buf(), source })?;
    let mut split = DatasetSplit::default();
    for row in csv::Reader::from_reader(file).deserialize() {
        let row: CsvRow = row?;
        let mut chars = row.char.chars();
        let (Some(ch), None) = (chars.next(), chars.next()) else {
            return Err(PhonoError::Data(format!("`{}` is not a single character", row.char)));
        };
        let e = PronEntry { ch, onset: row.onset, nucleus: row.nucleus, coda: row.coda };
        match row.partition {
            Partition::Train => split.train.push(e),
            Partition::Validation => split.validation.push(e),
            Partition::Test => split.test.push(e),
        }
    }
    Ok(split)
}

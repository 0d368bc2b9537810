use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LmError;

/// One position in a character stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sym {
    Unk,
    /// End of a line; also the context before the first character.
    Eos,
    Char(char),
}

/// Output classes: UNK, EOS, then the training characters in codepoint order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<String> for CharVocab {
    fn from(s: String) -> CharVocab {
        CharVocab::new(s.chars())
    }
}

impl From<CharVocab> for String {
    fn from(v: CharVocab) -> String {
        v.chars.into_iter().collect()
    }
}

impl CharVocab {
    pub const UNK: usize = 0;
    pub const EOS: usize = 1;

    pub fn new(chars: impl IntoIterator<Item = char>) -> CharVocab {
        let chars: Vec<char> = chars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 2)).collect();
        CharVocab { chars, index }
    }

    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> CharVocab {
        CharVocab::new(lines.iter().flat_map(|l| l.as_ref().chars()))
    }

    /// Number of output classes.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index(&self, s: Sym) -> usize {
        match s {
            Sym::Unk => Self::UNK,
            Sym::Eos => Self::EOS,
            Sym::Char(c) => self.index.get(&c).copied().unwrap_or(Self::UNK),
        }
    }

    pub fn sym(&self, i: usize) -> Sym {
        match i {
            Self::UNK => Sym::Unk,
            Self::EOS => Sym::Eos,
            _ => Sym::Char(self.chars[i - 2]),
        }
    }
}

/// Sentence-per-line UTF-8 text; blank lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<String>, LmError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LmError::Io { path: path.to_path_buf(), source })?;
    Ok(corpus_lines(&text))
}

pub fn corpus_lines(text: &str) -> Vec<String> {
    text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty()).map(str::to_string).collect()
}

/// Characters of every line, each line followed by EOS.
pub fn stream<S: AsRef<str>>(lines: &[S]) -> Vec<Sym> {
    let mut out = Vec::new();
    for l in lines {
        out.extend(l.as_ref().chars().map(Sym::Char));
        out.push(Sym::Eos);
    }
    out
}

/// Input/target pairs for next-symbol prediction; the first input is EOS.
pub fn shifted(stream: &[Sym]) -> (Vec<Sym>, Vec<Sym>) {
    let mut inputs = Vec::with_capacity(stream.len());
    inputs.push(Sym::Eos);
    inputs.extend_from_slice(&stream[..stream.len().saturating_sub(1)]);
    (inputs, stream.to_vec())
}

/// Entropy in bits of the symbol distribution of `stream`.
pub fn unigram_entropy(stream: &[Sym]) -> f64 {
    let mut counts: HashMap<Sym, usize> = HashMap::new();
    for s in stream {
        *counts.entry(*s).or_default() += 1;
    }
    let n = stream.len() as f64;
    counts.values().map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum()
}

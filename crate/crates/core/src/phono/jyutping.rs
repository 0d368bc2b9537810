use std::fmt;

use serde::{Deserialize, Serialize};

use super::PhonoError;

/// Empty onset or coda.
pub const NULL_MARK: &str = "#";

/// Onsets ordered so that digraphs are tried before single letters.
const ONSETS: [&str; 19] = [
    "ng", "gw", "kw", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "w", "z", "c", "s", "j",
];

const CODAS: [&str; 6] = ["ng", "m", "n", "p", "t", "k"];

const SYLLABIC_NASALS: [&str; 2] = ["m", "ng"];

/// Which of the three sub-syllabic slots a token fills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Onset,
    Nucleus,
    Coda,
}

impl Unit {
    pub const ALL: [Unit; 3] = [Unit::Onset, Unit::Nucleus, Unit::Coda];

    pub fn name(self) -> &'static str {
        match self {
            Unit::Onset => "onset",
            Unit::Nucleus => "nucleus",
            Unit::Coda => "coda",
        }
    }
}

/// Toneless syllable split into onset, nucleus and coda.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Syllable {
    pub onset: String,
    pub nucleus: String,
    pub coda: String,
}

impl Syllable {
    pub fn unit(&self, u: Unit) -> &str {
        match u {
            Unit::Onset => &self.onset,
            Unit::Nucleus => &self.nucleus,
            Unit::Coda => &self.coda,
        }
    }

    /// Concatenation with the null marks dropped.
    pub fn toneless(&self) -> String {
        [&self.onset, &self.nucleus, &self.coda]
            .iter()
            .filter(|s| s.as_str() != NULL_MARK)
            .map(|s| s.as_str())
            .collect()
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.onset, self.nucleus, self.coda)
    }
}

/// Drops a trailing tone digit, if any.
pub fn strip_tone(s: &str) -> &str {
    s.strip_suffix(|c: char| c.is_ascii_digit()).unwrap_or(s)
}

/// Splits one jyutping syllable into onset, nucleus and coda.
///
/// Vowel glides stay in the nucleus (`fui` → `f ui #`); only consonantal
/// finals form a coda. A bare nasal (`m`, `ng`, `hm`, `hng`) is a syllabic
/// nucleus with an empty coda.
pub fn segment_jyutping(s: &str) -> Result<Syllable, PhonoError> {
    let err = || PhonoError::Segmentation { syllable: s.to_string() };
    let body = strip_tone(s.trim());
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_lowercase()) {
        return Err(err());
    }
    if SYLLABIC_NASALS.contains(&body) {
        return Ok(Syllable { onset: NULL_MARK.into(), nucleus: body.into(), coda: NULL_MARK.into() });
    }
    let onset = ONSETS.iter().find(|o| body.starts_with(**o)).copied();
    let rest = &body[onset.map_or(0, str::len)..];
    if onset == Some("h") && SYLLABIC_NASALS.contains(&rest) {
        return Ok(Syllable {
            onset: "h".into(),
            nucleus: rest.into(),
            coda: NULL_MARK.into(),
        });
    }
    let coda = CODAS.iter().find(|c| rest.ends_with(**c) && rest.len() > c.len()).copied();
    let nucleus = &rest[..rest.len() - coda.map_or(0, str::len)];
    if nucleus.is_empty() || !nucleus.bytes().all(|b| b"aeiouy".contains(&b)) {
        return Err(err());
    }
    Ok(Syllable {
        onset: onset.unwrap_or(NULL_MARK).into(),
        nucleus: nucleus.into(),
        coda: coda.unwrap_or(NULL_MARK).into(),
    })
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PhonoError;

/// Parses a `U+XXXX` field (a trailing `<source` annotation is ignored).
pub fn parse_codepoint(field: &str) -> Option<char> {
    let field = field.split('<').next()?;
    let hex = field.strip_prefix("U+")?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

fn read(path: &Path) -> Result<String, PhonoError> {
    fs::read_to_string(path).map_err(|source| PhonoError::Io { path: path.to_path_buf(), source })
}

/// Iterates `(codepoint, field, value)` triples of a UniHan text file.
/// Lines with an unparseable codepoint are skipped with a warning.
fn records(text: &str) -> impl Iterator<Item = (char, &str, &str)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let mut it = line.splitn(3, '\t');
        let (cp, field, value) = (it.next()?, it.next()?, it.next()?);
        match parse_codepoint(cp) {
            Some(c) => Some((c, field, value.trim())),
            None => {
                warn!("line {}: malformed codepoint `{cp}`", n + 1);
                None
            }
        }
    })
}

/// Reads kCantonese readings; each character's readings stay in file order.
pub fn parse_unihan_readings(path: impl AsRef<Path>) -> Result<BTreeMap<char, Vec<String>>, PhonoError> {
    Ok(readings_from_text(&read(path.as_ref())?))
}

pub fn readings_from_text(text: &str) -> BTreeMap<char, Vec<String>> {
    let mut out = BTreeMap::new();
    for (c, field, value) in records(text) {
        if field == "kCantonese" {
            out.insert(c, value.split_whitespace().map(str::to_string).collect());
        }
    }
    out
}

/// Simplified/traditional variant links from `Unihan_Variants.txt`.
#[derive(Clone, Debug, Default)]
pub struct VariantMap {
    pub simplified: BTreeMap<char, Vec<char>>,
    pub traditional: BTreeMap<char, Vec<char>>,
    simplified_targets: BTreeSet<char>,
}

impl VariantMap {
    pub fn new(simplified: BTreeMap<char, Vec<char>>, traditional: BTreeMap<char, Vec<char>>) -> Self {
        let simplified_targets = simplified
            .iter()
            .flat_map(|(c, vs)| vs.iter().filter(move |v| *v != c).copied())
            .collect();
        VariantMap { simplified, traditional, simplified_targets }
    }

    /// Traditional counterparts of `c` other than `c` itself, in listed order.
    pub fn traditional_of(&self, c: char) -> Vec<char> {
        self.traditional.get(&c).map(|v| v.iter().copied().filter(|t| *t != c).collect()).unwrap_or_default()
    }
}

pub fn parse_unihan_variants(path: impl AsRef<Path>) -> Result<VariantMap, PhonoError> {
    Ok(variants_from_text(&read(path.as_ref())?))
}

pub fn variants_from_text(text: &str) -> VariantMap {
    let mut simplified = BTreeMap::new();
    let mut traditional = BTreeMap::new();
    for (c, field, value) in records(text) {
        let target = match field {
            "kSimplifiedVariant" => &mut simplified,
            "kTraditionalVariant" => &mut traditional,
            _ => continue,
        };
        let vs: Vec<char> = value.split_whitespace().filter_map(parse_codepoint).collect();
        target.insert(c, vs);
    }
    VariantMap::new(simplified, traditional)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScriptClass {
    Traditional,
    Simplified,
    Shared,
}

/// Simplified if some other character simplifies to `c`; Traditional if
/// `c` simplifies to something else; Shared otherwise.
pub fn classify_script(c: char, variants: &VariantMap) -> ScriptClass {
    if variants.simplified_targets.contains(&c) {
        ScriptClass::Simplified
    } else if variants.simplified.get(&c).is_some_and(|vs| vs.iter().any(|v| *v != c)) {
        ScriptClass::Traditional
    } else {
        ScriptClass::Shared
    }
}

/// Uniform choice among a character's readings.
pub fn pick_reading<'a, R: Rng + ?Sized>(readings: &'a [String], rng: &mut R) -> Result<&'a str, PhonoError> {
    if readings.is_empty() {
        return Err(PhonoError::Data("no readings to choose from".into()));
    }
    Ok(&readings[rng.gen_range(0..readings.len())])
}

use hierchar::ids::{parse_rule_text, RuleTable};
use hierchar::phono::{DatasetSplit, PronEntry};

const SEMANTIC: [char; 12] = ['亻', '氵', '木', '口', '扌', '女', '土', '日', '月', '火', '言', '金'];
const PHONETIC: [(char, &str, &str, &str); 16] = [
    ('青', "c", "i", "ng"),
    ('每', "m", "u", "i"),
    ('工', "g", "u", "ng"),
    ('皮', "p", "e", "i"),
    ('包', "b", "a", "au"),
    ('方', "f", "o", "ng"),
    ('生', "s", "a", "ng"),
    ('馬', "m", "aa", "#"),
    ('羊', "j", "oe", "ng"),
    ('可', "h", "o", "#"),
    ('主', "z", "y", "#"),
    ('也', "j", "aa", "#"),
    ('里', "l", "e", "i"),
    ('分', "f", "a", "n"),
    ('古', "g", "u", "#"),
    ('交', "g", "aa", "u"),
];

/// Synthetic semantic-phonetic compounds on private-use codepoints.
///
/// The phonetic component fixes the rime; some semantic components shift
/// the onset, so the mapping needs both children.
pub fn toy(n: usize) -> (RuleTable, Vec<PronEntry>) {
    let mut text = String::new();
    let mut entries = Vec::new();
    let mut cp = 0xE000u32;
    'outer: for (pi, &(p, on, nu, cd)) in PHONETIC.iter().enumerate() {
        for (si, &s) in SEMANTIC.iter().enumerate() {
            if entries.len() == n {
                break 'outer;
            }
            if (si + pi) % 3 == 0 {
                continue;
            }
            let ch = char::from_u32(cp).unwrap();
            cp += 1;
            let idc = if si % 4 == 3 { '⿱' } else { '⿰' };
            text.push_str(&format!("U+{:04X}\t{ch}\t{idc}{s}{p}\n", ch as u32));
            let onset = match si % 5 {
                0 => "#",
                1 if on != "h" => "h",
                _ => on,
            };
            entries.push(PronEntry { ch, onset: onset.into(), nucleus: nu.into(), coda: cd.into() });
        }
    }
    assert_eq!(entries.len(), n, "toy inventory too small");
    (parse_rule_text(&text).unwrap(), entries)
}

/// Split whose validation set is the training set, for capacity checks.
pub fn memorize_split(entries: &[PronEntry]) -> DatasetSplit {
    DatasetSplit {
        scenario: None,
        seed: None,
        train: entries.to_vec(),
        validation: entries.to_vec(),
        test: entries.to_vec(),
    }
}

/// Disjoint train/validation/test thirds.
pub fn thirds(entries: &[PronEntry]) -> DatasetSplit {
    let k = entries.len() / 3;
    DatasetSplit {
        scenario: None,
        seed: None,
        train: entries[..k].to_vec(),
        validation: entries[k..2 * k].to_vec(),
        test: entries[2 * k..].to_vec(),
    }
}

/// Lines of `width` characters drawn from a sticky Markov chain over the
/// given characters; `total` characters in all.
pub fn markov_lines(chars: &[char], total: usize, width: usize, seed: u64) -> Vec<String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = chars.len();
    let mut cur = 0usize;
    let mut lines = Vec::new();
    let mut line = String::new();
    for _ in 0..total {
        cur = if rng.gen_bool(0.8) { (3 * cur + 1) % k } else { rng.gen_range(0..k) };
        line.push(chars[cur]);
        if line.chars().count() == width {
            lines.push(std::mem::take(&mut line));
        }
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

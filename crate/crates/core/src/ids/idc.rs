use serde::{Deserialize, Serialize};

/// One of the ten binary Ideographic Description Characters.
///
/// The two ternary IDCs (U+2FF2, U+2FF3) never appear here; they are
/// rewritten into nested binary nodes when a tree is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Idc {
    LeftToRight,
    AboveToBelow,
    FullSurround,
    SurroundFromAbove,
    SurroundFromBelow,
    SurroundFromLeft,
    SurroundFromUpperLeft,
    SurroundFromUpperRight,
    SurroundFromLowerLeft,
    Overlaid,
}

/// Operator as it appears in a raw IDS expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawOperator {
    Binary(Idc),
    /// Ternary operator, carrying the binary IDC it nests into.
    Ternary(Idc),
}

impl RawOperator {
    pub fn arity(self) -> usize {
        match self {
            RawOperator::Binary(_) => 2,
            RawOperator::Ternary(_) => 3,
        }
    }

    pub fn from_char(c: char) -> Option<RawOperator> {
        match c {
            '\u{2FF2}' => Some(RawOperator::Ternary(Idc::LeftToRight)),
            '\u{2FF3}' => Some(RawOperator::Ternary(Idc::AboveToBelow)),
            _ => Idc::from_char(c).map(RawOperator::Binary),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            RawOperator::Binary(idc) => idc.to_char(),
            RawOperator::Ternary(Idc::LeftToRight) => '\u{2FF2}',
            RawOperator::Ternary(_) => '\u{2FF3}',
        }
    }
}

impl Idc {
    pub const ALL: [Idc; 10] = [
        Idc::LeftToRight,
        Idc::AboveToBelow,
        Idc::FullSurround,
        Idc::SurroundFromAbove,
        Idc::SurroundFromBelow,
        Idc::SurroundFromLeft,
        Idc::SurroundFromUpperLeft,
        Idc::SurroundFromUpperRight,
        Idc::SurroundFromLowerLeft,
        Idc::Overlaid,
    ];

    pub fn from_char(c: char) -> Option<Idc> {
        Some(match c {
            '\u{2FF0}' => Idc::LeftToRight,
            '\u{2FF1}' => Idc::AboveToBelow,
            '\u{2FF4}' => Idc::FullSurround,
            '\u{2FF5}' => Idc::SurroundFromAbove,
            '\u{2FF6}' => Idc::SurroundFromBelow,
            '\u{2FF7}' => Idc::SurroundFromLeft,
            '\u{2FF8}' => Idc::SurroundFromUpperLeft,
            '\u{2FF9}' => Idc::SurroundFromUpperRight,
            '\u{2FFA}' => Idc::SurroundFromLowerLeft,
            '\u{2FFB}' => Idc::Overlaid,
            _ => return None,
        })
    }

    pub fn to_char(self) -> char {
        match self {
            Idc::LeftToRight => '\u{2FF0}',
            Idc::AboveToBelow => '\u{2FF1}',
            Idc::FullSurround => '\u{2FF4}',
            Idc::SurroundFromAbove => '\u{2FF5}',
            Idc::SurroundFromBelow => '\u{2FF6}',
            Idc::SurroundFromLeft => '\u{2FF7}',
            Idc::SurroundFromUpperLeft => '\u{2FF8}',
            Idc::SurroundFromUpperRight => '\u{2FF9}',
            Idc::SurroundFromLowerLeft => '\u{2FFA}',
            Idc::Overlaid => '\u{2FFB}',
        }
    }

    /// Dense index in `0..10`, used for operator embedding rows.
    pub fn index(self) -> usize {
        Idc::ALL.iter().position(|&i| i == self).unwrap()
    }
}

/// True for every character in U+2FF0..=U+2FFB.
pub fn is_idc(c: char) -> bool {
    ('\u{2FF0}'..='\u{2FFB}').contains(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_round_trip() {
        for idc in Idc::ALL {
            assert_eq!(Idc::from_char(idc.to_char()), Some(idc));
            assert!(is_idc(idc.to_char()));
        }
        assert_eq!(Idc::from_char('⿲'), None);
        assert_eq!(RawOperator::from_char('⿳'), Some(RawOperator::Ternary(Idc::AboveToBelow)));
        assert_eq!(RawOperator::from_char('⿲').unwrap().to_char(), '⿲');
    }

    #[test]
    fn indices_are_dense() {
        let mut seen: Vec<usize> = Idc::ALL.iter().map(|i| i.index()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}

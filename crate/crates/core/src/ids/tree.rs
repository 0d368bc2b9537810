use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::idc::{Idc, RawOperator};
use super::IdsError;

/// A token of a raw IDS expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdsToken {
    Operator(RawOperator),
    Component(char),
}

impl IdsToken {
    pub fn from_char(c: char) -> IdsToken {
        match RawOperator::from_char(c) {
            Some(op) => IdsToken::Operator(op),
            None => IdsToken::Component(c),
        }
    }
}

/// Splits an IDS expression into tokens.
///
/// Whitespace is ignored and bracketed annotations such as `[GTJK]` are
/// dropped. An unbalanced bracket is a parse error.
pub fn tokenize(expr: &str) -> Result<Vec<IdsToken>, IdsError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (i, c) in expr.chars().enumerate() {
        match c {
            '[' => depth += 1,
            ']' => {
                if depth == 0 {
                    return Err(IdsError::Parse { index: i, message: "unbalanced ']'".into() });
                }
                depth -= 1;
            }
            _ if depth > 0 => {}
            c if c.is_whitespace() => {}
            c => out.push(IdsToken::from_char(c)),
        }
    }
    if depth > 0 {
        return Err(IdsError::Parse { index: expr.chars().count(), message: "unclosed '['".into() });
    }
    Ok(out)
}

/// Leaf value of a glyph tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leaf {
    Char(char),
    Unk,
}

impl fmt::Display for Leaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leaf::Char(c) => write!(f, "{c}"),
            Leaf::Unk => f.write_str("<unk>"),
        }
    }
}

/// Tree with possibly ternary nodes, straight out of the prefix parser.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawNode {
    Leaf(char),
    Node { op: RawOperator, children: Vec<RawNode> },
}

/// Strictly binary decomposition tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlyphTree {
    Leaf(Leaf),
    Op {
        idc: Idc,
        left: Box<GlyphTree>,
        right: Box<GlyphTree>,
        /// Character whose expansion produced this node, when there is one.
        /// Synthetic inner nodes from ternary rewriting carry `None`.
        #[serde(default)]
        source: Option<char>,
    },
}

/// A token of a linearized tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeqToken {
    Op(Idc),
    Leaf(Leaf),
}

impl SeqToken {
    pub fn is_operator(self) -> bool {
        matches!(self, SeqToken::Op(_))
    }
}

impl fmt::Display for SeqToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqToken::Op(idc) => write!(f, "{}", idc.to_char()),
            SeqToken::Leaf(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearOrder {
    #[default]
    Pre,
    Post,
    In,
}

impl LinearOrder {
    pub const ALL: [LinearOrder; 3] = [LinearOrder::Pre, LinearOrder::Post, LinearOrder::In];

    pub fn name(self) -> &'static str {
        match self {
            LinearOrder::Pre => "pre",
            LinearOrder::Post => "post",
            LinearOrder::In => "in",
        }
    }
}

impl std::str::FromStr for LinearOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pre" | "preorder" => Ok(LinearOrder::Pre),
            "post" | "postorder" => Ok(LinearOrder::Post),
            "in" | "inorder" => Ok(LinearOrder::In),
            other => Err(format!("unknown linearization order `{other}`")),
        }
    }
}

/// Prefix-notation parse of a token sequence into a raw tree.
pub fn parse_raw(tokens: &[IdsToken]) -> Result<RawNode, IdsError> {
    if tokens.is_empty() {
        return Err(IdsError::Parse { index: 0, message: "empty expression".into() });
    }
    let mut pos = 0;
    let node = parse_at(tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(IdsError::Parse {
            index: pos,
            message: format!("{} trailing token(s)", tokens.len() - pos),
        });
    }
    Ok(node)
}

fn parse_at(tokens: &[IdsToken], pos: &mut usize) -> Result<RawNode, IdsError> {
    let at = *pos;
    let Some(tok) = tokens.get(at) else {
        return Err(IdsError::Parse { index: at, message: "dangling operator: missing operand".into() });
    };
    *pos += 1;
    match *tok {
        IdsToken::Component(c) => Ok(RawNode::Leaf(c)),
        IdsToken::Operator(op) => {
            let mut children = Vec::with_capacity(op.arity());
            for _ in 0..op.arity() {
                if *pos >= tokens.len() {
                    return Err(IdsError::Parse {
                        index: at,
                        message: format!("dangling operator {}: missing operand", op.to_char()),
                    });
                }
                children.push(parse_at(tokens, pos)?);
            }
            Ok(RawNode::Node { op, children })
        }
    }
}

/// Rewrites ternary nodes into two right-nested binary nodes.
pub fn binarize(raw: &RawNode) -> Result<GlyphTree, IdsError> {
    match raw {
        RawNode::Leaf(c) => Ok(GlyphTree::Leaf(Leaf::Char(*c))),
        RawNode::Node { op, children } => {
            let kids = children.iter().map(binarize).collect::<Result<Vec<_>, _>>()?;
            match (op, kids.len()) {
                (RawOperator::Binary(idc), 2) => {
                    let mut it = kids.into_iter();
                    let left = it.next().unwrap();
                    let right = it.next().unwrap();
                    Ok(GlyphTree::op(*idc, left, right))
                }
                (RawOperator::Ternary(idc), 3) => {
                    let mut it = kids.into_iter();
                    let a = it.next().unwrap();
                    let b = it.next().unwrap();
                    let c = it.next().unwrap();
                    Ok(GlyphTree::op(*idc, a, GlyphTree::op(*idc, b, c)))
                }
                (_, n) => Err(IdsError::Structure { arity: n }),
            }
        }
    }
}

/// Parses a token sequence into a strictly binary tree.
pub fn parse_ids(tokens: &[IdsToken]) -> Result<GlyphTree, IdsError> {
    binarize(&parse_raw(tokens)?)
}

/// Convenience wrapper over [`tokenize`] and [`parse_ids`].
pub fn parse_ids_str(expr: &str) -> Result<GlyphTree, IdsError> {
    parse_ids(&tokenize(expr)?)
}

impl GlyphTree {
    pub fn leaf(c: char) -> GlyphTree {
        GlyphTree::Leaf(Leaf::Char(c))
    }

    pub fn op(idc: Idc, left: GlyphTree, right: GlyphTree) -> GlyphTree {
        GlyphTree::Op { idc, left: Box::new(left), right: Box::new(right), source: None }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, GlyphTree::Leaf(_))
    }

    pub fn node_count(&self) -> usize {
        match self {
            GlyphTree::Leaf(_) => 1,
            GlyphTree::Op { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            GlyphTree::Leaf(_) => 1,
            GlyphTree::Op { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Number of levels; a single leaf has height 1.
    pub fn height(&self) -> usize {
        match self {
            GlyphTree::Leaf(_) => 1,
            GlyphTree::Op { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Leaf>) {
        match self {
            GlyphTree::Leaf(l) => out.push(*l),
            GlyphTree::Op { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// The token this node contributes to a linearization.
    pub fn token(&self) -> SeqToken {
        match self {
            GlyphTree::Leaf(l) => SeqToken::Leaf(*l),
            GlyphTree::Op { idc, .. } => SeqToken::Op(*idc),
        }
    }

    pub fn linearize(&self, order: LinearOrder) -> Vec<SeqToken> {
        let mut out = Vec::with_capacity(self.node_count());
        self.walk(order, &mut out);
        out
    }

    fn walk(&self, order: LinearOrder, out: &mut Vec<SeqToken>) {
        match self {
            GlyphTree::Leaf(l) => out.push(SeqToken::Leaf(*l)),
            GlyphTree::Op { idc, left, right, .. } => match order {
                LinearOrder::Pre => {
                    out.push(SeqToken::Op(*idc));
                    left.walk(order, out);
                    right.walk(order, out);
                }
                LinearOrder::Post => {
                    left.walk(order, out);
                    right.walk(order, out);
                    out.push(SeqToken::Op(*idc));
                }
                LinearOrder::In => {
                    left.walk(order, out);
                    out.push(SeqToken::Op(*idc));
                    right.walk(order, out);
                }
            },
        }
    }

    /// Nodes in post-order (children before parents), the bottom-up
    /// evaluation order used by the recursive encoder.
    pub fn post_order(&self) -> Vec<&GlyphTree> {
        let mut out = Vec::with_capacity(self.node_count());
        fn go<'a>(t: &'a GlyphTree, out: &mut Vec<&'a GlyphTree>) {
            if let GlyphTree::Op { left, right, .. } = t {
                go(left, out);
                go(right, out);
            }
            out.push(t);
        }
        go(self, &mut out);
        out
    }

    /// Nodes in breadth-first order, root first.
    pub fn level_order(&self) -> Vec<&GlyphTree> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([self]);
        while let Some(t) = queue.pop_front() {
            out.push(t);
            if let GlyphTree::Op { left, right, .. } = t {
                queue.push_back(left);
                queue.push_back(right);
            }
        }
        out
    }

    /// Swaps left and right children at every inner node.
    pub fn mirrored(&self) -> GlyphTree {
        match self {
            GlyphTree::Leaf(l) => GlyphTree::Leaf(*l),
            GlyphTree::Op { idc, left, right, source } => GlyphTree::Op {
                idc: *idc,
                left: Box::new(right.mirrored()),
                right: Box::new(left.mirrored()),
                source: *source,
            },
        }
    }

    /// Structural copy with every `source` annotation cleared.
    pub fn without_sources(&self) -> GlyphTree {
        match self {
            GlyphTree::Leaf(l) => GlyphTree::Leaf(*l),
            GlyphTree::Op { idc, left, right, .. } => {
                GlyphTree::op(*idc, left.without_sources(), right.without_sources())
            }
        }
    }

    /// Character this subtree spells, if known.
    pub fn source_char(&self) -> Option<char> {
        match self {
            GlyphTree::Leaf(Leaf::Char(c)) => Some(*c),
            GlyphTree::Leaf(Leaf::Unk) => None,
            GlyphTree::Op { source, .. } => *source,
        }
    }

    /// Multi-line indented rendering.
    pub fn to_indented(&self) -> String {
        let mut s = String::new();
        fn go(t: &GlyphTree, depth: usize, s: &mut String) {
            for _ in 0..depth {
                s.push_str("  ");
            }
            match t {
                GlyphTree::Leaf(l) => s.push_str(&format!("{l}\n")),
                GlyphTree::Op { idc, left, right, source } => {
                    match source {
                        Some(c) => s.push_str(&format!("{} ({c})\n", idc.to_char())),
                        None => s.push_str(&format!("{}\n", idc.to_char())),
                    }
                    go(left, depth + 1, s);
                    go(right, depth + 1, s);
                }
            }
        }
        go(self, 0, &mut s);
        s
    }
}

/// Bracketed form, e.g. `⿰(亻 ⿱(十 一))`.
impl fmt::Display for GlyphTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlyphTree::Leaf(l) => write!(f, "{l}"),
            GlyphTree::Op { idc, left, right, .. } => {
                write!(f, "{}({left} {right})", idc.to_char())
            }
        }
    }
}

/// Removes every operator token, keeping leaves in order.
pub fn strip_operators(seq: &[SeqToken]) -> Vec<SeqToken> {
    seq.iter().copied().filter(|t| !t.is_operator()).collect()
}

/// Rebuilds a tree from its pre-order linearization.
pub fn reconstruct_pre_order(seq: &[SeqToken]) -> Result<GlyphTree, IdsError> {
    fn go(seq: &[SeqToken], pos: &mut usize) -> Result<GlyphTree, IdsError> {
        let at = *pos;
        let tok = seq.get(at).ok_or(IdsError::Parse {
            index: at,
            message: "sequence ended inside an operator".into(),
        })?;
        *pos += 1;
        match *tok {
            SeqToken::Leaf(l) => Ok(GlyphTree::Leaf(l)),
            SeqToken::Op(idc) => {
                let left = go(seq, pos)?;
                let right = go(seq, pos)?;
                Ok(GlyphTree::op(idc, left, right))
            }
        }
    }
    let mut pos = 0;
    let t = go(seq, &mut pos)?;
    if pos != seq.len() {
        return Err(IdsError::Parse { index: pos, message: "trailing tokens".into() });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_horizontal_pair() {
        let t = parse_ids_str("⿰ 亻 士").unwrap();
        assert_eq!(t, GlyphTree::op(Idc::LeftToRight, GlyphTree::leaf('亻'), GlyphTree::leaf('士')));
    }

    #[test]
    fn single_component_is_leaf() {
        assert_eq!(parse_ids_str("一").unwrap(), GlyphTree::leaf('一'));
    }

    #[test]
    fn ternary_right_nests() {
        let t = parse_ids_str("⿲ABC").unwrap();
        let expected = GlyphTree::op(
            Idc::LeftToRight,
            GlyphTree::leaf('A'),
            GlyphTree::op(Idc::LeftToRight, GlyphTree::leaf('B'), GlyphTree::leaf('C')),
        );
        assert_eq!(t, expected);
        let t = parse_ids_str("⿳ABC").unwrap();
        assert_eq!(t.to_string(), "⿱(A ⿱(B C))");
        assert_eq!(t.leaves(), vec![Leaf::Char('A'), Leaf::Char('B'), Leaf::Char('C')]);
    }

    #[test]
    fn binarize_identity_on_binary() {
        let raw = parse_raw(&tokenize("⿰A⿱BC").unwrap()).unwrap();
        let t = binarize(&raw).unwrap();
        assert_eq!(t.to_string(), "⿰(A ⿱(B C))");
    }

    #[test]
    fn binarize_rejects_bad_arity() {
        let raw = RawNode::Node {
            op: RawOperator::Binary(Idc::LeftToRight),
            children: vec![RawNode::Leaf('A')],
        };
        assert!(matches!(binarize(&raw), Err(IdsError::Structure { arity: 1 })));
    }

    #[test]
    fn two_ternaries_give_leaves_minus_one_inner() {
        let t = parse_ids_str("⿲A⿳BCDE").unwrap();
        assert_eq!(t.leaf_count(), 5);
        assert_eq!(t.node_count() - t.leaf_count(), 4);
    }

    #[test]
    fn dangling_operator_reports_index() {
        match parse_ids_str("⿰A⿱B") {
            Err(IdsError::Parse { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_tokens_rejected() {
        assert!(matches!(parse_ids_str("⿰ABC"), Err(IdsError::Parse { index: 3, .. })));
        assert!(parse_ids_str("").is_err());
    }

    #[test]
    fn annotations_are_stripped() {
        let t = parse_ids_str("⿻十丨[GJ]").unwrap();
        assert_eq!(t.to_string(), "⿻(十 丨)");
        assert!(tokenize("⿰A]").is_err());
    }

    #[test]
    fn linearizations() {
        let t = parse_ids_str("⿰人士").unwrap();
        let pre: String = t.linearize(LinearOrder::Pre).iter().map(|s| s.to_string()).collect();
        let post: String = t.linearize(LinearOrder::Post).iter().map(|s| s.to_string()).collect();
        let inord: String = t.linearize(LinearOrder::In).iter().map(|s| s.to_string()).collect();
        assert_eq!(pre, "⿰人士");
        assert_eq!(post, "人士⿰");
        assert_eq!(inord, "人⿰士");
        assert_eq!(GlyphTree::leaf('一').linearize(LinearOrder::In), vec![SeqToken::Leaf(Leaf::Char('一'))]);
    }

    #[test]
    fn strip_keeps_leaves() {
        let t = parse_ids_str("⿰人士").unwrap();
        let s = strip_operators(&t.linearize(LinearOrder::Pre));
        assert_eq!(s, vec![SeqToken::Leaf(Leaf::Char('人')), SeqToken::Leaf(Leaf::Char('士'))]);
        assert_eq!(strip_operators(&s), s);
    }

    #[test]
    fn level_order_numbers_like_breadth_first() {
        let t = parse_ids_str("⿱艹⿱⿱氶一灬").unwrap();
        let order: Vec<String> = t.level_order().iter().map(|n| n.token().to_string()).collect();
        assert_eq!(order, vec!["⿱", "艹", "⿱", "⿱", "灬", "氶", "一"]);
    }
}

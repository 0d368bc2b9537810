use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::warn;

use super::tree::{parse_raw, tokenize, binarize, GlyphTree, IdsToken, Leaf};
use super::IdsError;

pub const DEFAULT_MAX_DEPTH: usize = 64;

/// Decomposition rule for one character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ids {
    pub codepoint: char,
    pub expr: Vec<IdsToken>,
}

/// Character → IDS rules plus the terminal inventory.
#[derive(Clone, Debug, Default)]
pub struct RuleTable {
    rules: BTreeMap<char, Ids>,
    leaf_set: BTreeSet<char>,
    /// Parsed once at load; rules are immutable afterwards.
    parsed: HashMap<char, GlyphTree>,
    pub skipped_lines: usize,
    pub duplicate_rules: usize,
}

impl RuleTable {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, c: char) -> Option<&Ids> {
        self.rules.get(&c)
    }

    pub fn has_rule(&self, c: char) -> bool {
        self.rules.contains_key(&c)
    }

    pub fn is_terminal(&self, c: char) -> bool {
        self.leaf_set.contains(&c)
    }

    /// Known to the table, either as a rule or as a terminal.
    pub fn knows(&self, c: char) -> bool {
        self.has_rule(c) || self.is_terminal(c)
    }

    pub fn leaf_set(&self) -> &BTreeSet<char> {
        &self.leaf_set
    }

    pub fn codepoints(&self) -> impl Iterator<Item = char> + '_ {
        self.rules.keys().copied()
    }

    /// Builds a table from `(codepoint, expression)` pairs.
    ///
    /// The first rule for a codepoint wins. A rule whose expression is the
    /// character itself marks a terminal.
    pub fn from_rules<I, S>(rules: I) -> Result<RuleTable, IdsError>
    where
        I: IntoIterator<Item = (char, S)>,
        S: AsRef<str>,
    {
        let mut table = RuleTable::default();
        for (c, expr) in rules {
            table.insert(c, expr.as_ref())?;
        }
        table.finish()
    }

    fn insert(&mut self, c: char, expr: &str) -> Result<(), IdsError> {
        let tokens = tokenize(expr)?;
        let raw = parse_raw(&tokens)?;
        binarize(&raw)?;
        if self.rules.contains_key(&c) || self.leaf_set.contains(&c) {
            warn!("duplicate rule for {c} (U+{:04X}) ignored", c as u32);
            self.duplicate_rules += 1;
            return Ok(());
        }
        if tokens == [IdsToken::Component(c)] {
            self.leaf_set.insert(c);
        } else {
            self.rules.insert(c, Ids { codepoint: c, expr: tokens });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RuleTable, IdsError> {
        let mut components = BTreeSet::new();
        for ids in self.rules.values() {
            for t in &ids.expr {
                if let IdsToken::Component(c) = t {
                    components.insert(*c);
                }
            }
        }
        for c in components {
            if !self.rules.contains_key(&c) {
                self.leaf_set.insert(c);
            }
        }
        for (c, ids) in &self.rules {
            let tree = binarize(&parse_raw(&ids.expr)?)?;
            self.parsed.insert(*c, tree);
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(IdsError::Cycle { codepoints: cycle });
        }
        Ok(self)
    }

    fn find_cycle(&self) -> Option<Vec<char>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<char, Mark> = HashMap::new();
        // Iterative DFS; the stack holds (node, next child index).
        for &root in self.rules.keys() {
            if marks.contains_key(&root) {
                continue;
            }
            let mut stack: Vec<(char, usize)> = vec![(root, 0)];
            marks.insert(root, Mark::Open);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let children: Vec<char> = self.rules[&node]
                    .expr
                    .iter()
                    .filter_map(|t| match t {
                        IdsToken::Component(c) if self.rules.contains_key(c) => Some(*c),
                        _ => None,
                    })
                    .collect();
                if *next < children.len() {
                    let child = children[*next];
                    *next += 1;
                    match marks.get(&child) {
                        Some(Mark::Open) => {
                            let start = stack.iter().position(|(c, _)| *c == child).unwrap();
                            let mut cycle: Vec<char> = stack[start..].iter().map(|(c, _)| *c).collect();
                            cycle.push(child);
                            return Some(cycle);
                        }
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(child, Mark::Open);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    marks.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
        None
    }

    /// Fully expands `ch` into a binary tree of terminals.
    pub fn decompose(&self, ch: char, max_depth: usize) -> Result<GlyphTree, IdsError> {
        self.decompose_with(ch, &DecomposeOptions { max_depth, unify: None })
    }

    pub fn decompose_with(&self, ch: char, opts: &DecomposeOptions) -> Result<GlyphTree, IdsError> {
        if !self.knows(ch) {
            return Ok(GlyphTree::Leaf(Leaf::Unk));
        }
        self.expand(ch, 0, ch, opts)
    }

    fn expand(&self, ch: char, depth: usize, root: char, opts: &DecomposeOptions) -> Result<GlyphTree, IdsError> {
        if depth > opts.max_depth {
            return Err(IdsError::DepthExceeded { codepoint: root, max_depth: opts.max_depth });
        }
        let Some(template) = self.parsed.get(&ch) else {
            let leaf = opts.unify.and_then(|m| m.get(&ch)).copied().unwrap_or(ch);
            return Ok(GlyphTree::leaf(leaf));
        };
        let mut tree = self.substitute(template, depth, root, opts)?;
        if let GlyphTree::Op { source, .. } = &mut tree {
            *source = Some(ch);
        }
        Ok(tree)
    }

    fn substitute(
        &self,
        t: &GlyphTree,
        depth: usize,
        root: char,
        opts: &DecomposeOptions,
    ) -> Result<GlyphTree, IdsError> {
        match t {
            GlyphTree::Leaf(Leaf::Char(c)) => self.expand(*c, depth + 1, root, opts),
            GlyphTree::Leaf(Leaf::Unk) => Ok(GlyphTree::Leaf(Leaf::Unk)),
            GlyphTree::Op { idc, left, right, source } => Ok(GlyphTree::Op {
                idc: *idc,
                left: Box::new(self.substitute(left, depth, root, opts)?),
                right: Box::new(self.substitute(right, depth, root, opts)?),
                source: *source,
            }),
        }
    }

    /// Corpus-wide check: expands every rule and tallies heights.
    pub fn validate(&self, max_depth: usize) -> ValidationReport {
        let mut report = ValidationReport {
            rule_count: self.rules.len(),
            terminal_count: self.leaf_set.len(),
            skipped_lines: self.skipped_lines,
            duplicate_rules: self.duplicate_rules,
            ..Default::default()
        };
        let mut reached = BTreeSet::new();
        for &c in self.rules.keys() {
            match self.decompose(c, max_depth) {
                Ok(t) => {
                    *report.height_histogram.entry(t.height()).or_insert(0) += 1;
                    for l in t.leaves() {
                        if let Leaf::Char(ch) = l {
                            reached.insert(ch);
                        }
                    }
                }
                Err(e) => report.failures.push((c, e.to_string())),
            }
        }
        report.reachable_terminals = reached.len();
        report
    }
}

/// Options for [`RuleTable::decompose_with`].
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions<'a> {
    pub max_depth: usize,
    /// Optional map applied to terminals, e.g. `灬 → 火`.
    pub unify: Option<&'a HashMap<char, char>>,
}

impl Default for DecomposeOptions<'_> {
    fn default() -> Self {
        DecomposeOptions { max_depth: DEFAULT_MAX_DEPTH, unify: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub rule_count: usize,
    pub terminal_count: usize,
    pub reachable_terminals: usize,
    pub skipped_lines: usize,
    pub duplicate_rules: usize,
    /// Tree height → number of rule characters with that height.
    pub height_histogram: BTreeMap<usize, usize>,
    pub failures: Vec<(char, String)>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "rules: {}", self.rule_count)?;
        writeln!(f, "terminals: {}", self.terminal_count)?;
        writeln!(f, "terminals reached by expansion: {}", self.reachable_terminals)?;
        writeln!(f, "skipped lines: {}", self.skipped_lines)?;
        writeln!(f, "duplicate rules ignored: {}", self.duplicate_rules)?;
        if self.failures.is_empty() {
            writeln!(f, "cycles/expansion failures: none")?;
        } else {
            writeln!(f, "cycles/expansion failures: {}", self.failures.len())?;
            for (c, e) in &self.failures {
                writeln!(f, "  {c}: {e}")?;
            }
        }
        writeln!(f, "tree height histogram:")?;
        for (h, n) in &self.height_histogram {
            writeln!(f, "  {h:>3}: {n}")?;
        }
        Ok(())
    }
}

fn parse_codepoint(field: &str) -> Option<char> {
    let hex = field.strip_prefix("U+").or_else(|| field.strip_prefix("U-"))?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

/// Loads a CHISE-style IDS file: `U+XXXX<TAB>char<TAB>IDS[<TAB>IDS...]`.
///
/// Only the first expression of a line is used. Lines starting with `;`
/// or `#` are comments; malformed lines are skipped and counted.
pub fn load_rule_table(path: impl AsRef<Path>) -> Result<RuleTable, IdsError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IdsError::Io { path: path.to_path_buf(), source })?;
    parse_rule_text(&text)
}

pub fn parse_rule_text(text: &str) -> Result<RuleTable, IdsError> {
    let mut table = RuleTable::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let cp = fields.next().and_then(parse_codepoint);
        let ch = fields.next().and_then(|s| {
            let mut it = s.chars();
            let c = it.next()?;
            it.next().is_none().then_some(c)
        });
        let expr = fields.next();
        let (Some(cp), Some(ch), Some(expr)) = (cp, ch, expr) else {
            warn!("line {}: malformed rule skipped", lineno + 1);
            table.skipped_lines += 1;
            continue;
        };
        if cp != ch {
            warn!("line {}: codepoint field does not match character", lineno + 1);
            table.skipped_lines += 1;
            continue;
        }
        if let Err(e) = table.insert(ch, expr) {
            warn!("line {}: {e}", lineno + 1);
            table.skipped_lines += 1;
        }
    }
    table.finish()
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, VocabEmbeddings};
use super::Dropout;
use crate::autodiff::{AutodiffError, ParamId, ParamStore, Pick, Tape, Tensor, Var};
use crate::ids::{GlyphTree, SeqToken};

/// The five gate/candidate blocks, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeGate {
    Input,
    ForgetLeft,
    ForgetRight,
    Output,
    Candidate,
}

impl TreeGate {
    pub const ALL: [TreeGate; 5] =
        [TreeGate::Input, TreeGate::ForgetLeft, TreeGate::ForgetRight, TreeGate::Output, TreeGate::Candidate];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Weight blocks feeding each gate: `U_l`, `U_r` act on child hidden states,
/// `V`, `V_l`, `V_r` on the node's and its children's input embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeBlock {
    Ul,
    Ur,
    V,
    Vl,
    Vr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeLstmConfig {
    pub input_dim: usize,
    pub hidden: usize,
    /// One bias vector per gate block.
    pub bias: bool,
    /// When false, inner nodes get no input terms at all (operator ablation).
    pub use_operators: bool,
}

impl Default for TreeLstmConfig {
    fn default() -> Self {
        TreeLstmConfig { input_dim: 64, hidden: 256, bias: true, use_operators: true }
    }
}

/// Binary tree-structured LSTM over glyph trees.
///
/// Stacked storage: `w_x` is `3D × 5H` with row blocks `[x_n; x_l; x_r]`,
/// `w_h` is `2H × 5H` with row blocks `[h_l; h_r]`; column blocks follow
/// [`TreeGate::ALL`].
#[derive(Clone, Debug)]
pub struct TreeLstm {
    pub cfg: TreeLstmConfig,
    pub embeds: VocabEmbeddings,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: Option<ParamId>,
}

/// Every intermediate of one cell application (rows = batched nodes).
#[derive(Clone, Copy, Debug)]
pub struct NodeState {
    pub h: Var,
    pub c: Var,
    pub i: Var,
    pub f_l: Var,
    pub f_r: Var,
    pub o: Var,
    pub c_tilde: Var,
}

/// Result of a single-tree forward pass.
#[derive(Clone, Debug)]
pub struct TreeForward {
    /// States in post-order (children before parents); the last is the root.
    pub nodes: Vec<NodeState>,
}

impl TreeForward {
    pub fn root(&self) -> &NodeState {
        self.nodes.last().expect("tree has a node")
    }
}

/// Level-wise evaluation plan for a batch of trees.
///
/// Nodes are numbered per tree in post-order, trees concatenated. A leaf is
/// at level 0 and an inner node at `1 + max(child levels)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSchedule {
    pub levels: Vec<Vec<usize>>,
    /// `(level, position within level)` of every node.
    pub slot: Vec<(usize, usize)>,
    pub tokens: Vec<SeqToken>,
    pub children: Vec<Option<(usize, usize)>>,
    /// First node id of each tree, plus a final end marker.
    pub tree_offsets: Vec<usize>,
}

impl LevelSchedule {
    pub fn node_count(&self) -> usize {
        self.slot.len()
    }

    pub fn tree_count(&self) -> usize {
        self.tree_offsets.len() - 1
    }

    pub fn root(&self, tree: usize) -> usize {
        self.tree_offsets[tree + 1] - 1
    }

    pub fn level_of(&self, node: usize) -> usize {
        self.slot[node].0
    }
}

pub fn build_level_schedule(trees: &[&GlyphTree]) -> LevelSchedule {
    let mut s = LevelSchedule {
        levels: Vec::new(),
        slot: Vec::new(),
        tokens: Vec::new(),
        children: Vec::new(),
        tree_offsets: vec![0],
    };
    fn visit(t: &GlyphTree, s: &mut LevelSchedule) -> usize {
        let (level, children) = match t {
            GlyphTree::Leaf(_) => (0, None),
            GlyphTree::Op { left, right, .. } => {
                let l = visit(left, s);
                let r = visit(right, s);
                (1 + s.slot[l].0.max(s.slot[r].0), Some((l, r)))
            }
        };
        let id = s.slot.len();
        if s.levels.len() <= level {
            s.levels.resize(level + 1, Vec::new());
        }
        s.slot.push((level, s.levels[level].len()));
        s.levels[level].push(id);
        s.tokens.push(t.token());
        s.children.push(children);
        id
    }
    for t in trees {
        visit(t, &mut s);
        s.tree_offsets.push(s.slot.len());
    }
    s
}

/// Output of [`TreeLstm::batch_forward`].
#[derive(Clone, Debug)]
pub struct TreeBatch {
    pub schedule: LevelSchedule,
    pub levels: Vec<NodeState>,
    /// Root hidden states, one row per tree.
    pub roots: Var,
}

impl TreeBatch {
    /// Row-selection of one node's state within its level.
    pub fn node(&self, node: usize) -> (&NodeState, usize) {
        let (l, p) = self.schedule.slot[node];
        (&self.levels[l], p)
    }
}

impl TreeLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        vocab: Vocab,
        cfg: TreeLstmConfig,
        rng: &mut R,
    ) -> TreeLstm {
        let (d, h) = (cfg.input_dim, cfg.hidden);
        let embeds = VocabEmbeddings::new(store, &format!("{prefix}.embed"), vocab, d, rng);
        let w_x = store.add_weight(&format!("{prefix}.w_x"), 3 * d, 5 * h, rng);
        let w_h = store.add_weight(&format!("{prefix}.w_h"), 2 * h, 5 * h, rng);
        let b = cfg.bias.then(|| store.add_bias(&format!("{prefix}.b"), 5 * h));
        TreeLstm { cfg, embeds, w_x, w_h, b }
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.hidden
    }

    /// One weight block as an `H × H` or `H × D` matrix acting on column
    /// vectors.
    pub fn block(&self, store: &ParamStore, gate: TreeGate, which: TreeBlock) -> Tensor {
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        let cols = gate.index() * h..(gate.index() + 1) * h;
        let (w, rows) = match which {
            TreeBlock::Ul => (self.w_h, 0..h),
            TreeBlock::Ur => (self.w_h, h..2 * h),
            TreeBlock::V => (self.w_x, 0..d),
            TreeBlock::Vl => (self.w_x, d..2 * d),
            TreeBlock::Vr => (self.w_x, 2 * d..3 * d),
        };
        store.get(w).block(rows, cols).transposed()
    }

    pub fn gate_bias(&self, store: &ParamStore, gate: TreeGate) -> Option<Vec<f64>> {
        let h = self.cfg.hidden;
        self.b.map(|b| store.get(b).data()[gate.index() * h..(gate.index() + 1) * h].to_vec())
    }

    /// The cell on stacked inputs: `xcat` is `n × 3D`, `hcat` `n × 2H` and
    /// child cells `n × H`. Absent child terms are zero.
    fn cell(
        &self,
        tape: &mut Tape,
        xcat: Var,
        hcat: Option<Var>,
        children_c: Option<(Var, Var)>,
    ) -> Result<NodeState, AutodiffError> {
        let h = self.cfg.hidden;
        let w_x = tape.param(self.w_x);
        let mut pre = tape.matmul(xcat, w_x)?;
        if let Some(hcat) = hcat {
            let w_h = tape.param(self.w_h);
            let hp = tape.matmul(hcat, w_h)?;
            pre = tape.add(pre, hp)?;
        }
        if let Some(b) = self.b {
            let bv = tape.param(b);
            pre = tape.add_row(pre, bv)?;
        }
        let mut gate = |g: TreeGate| tape.slice_cols(pre, g.index() * h..(g.index() + 1) * h);
        let (ai, afl, afr, ao, ac) = (
            gate(TreeGate::Input)?,
            gate(TreeGate::ForgetLeft)?,
            gate(TreeGate::ForgetRight)?,
            gate(TreeGate::Output)?,
            gate(TreeGate::Candidate)?,
        );
        let i = tape.sigmoid(ai);
        let f_l = tape.sigmoid(afl);
        let f_r = tape.sigmoid(afr);
        let o = tape.sigmoid(ao);
        let c_tilde = tape.tanh(ac);
        let mut c = tape.mul(i, c_tilde)?;
        if let Some((c_l, c_r)) = children_c {
            let l = tape.mul(f_l, c_l)?;
            let r = tape.mul(f_r, c_r)?;
            c = tape.add(c, l)?;
            c = tape.add(c, r)?;
        }
        let tc = tape.tanh(c);
        let hn = tape.mul(o, tc)?;
        Ok(NodeState { h: hn, c, i, f_l, f_r, o, c_tilde })
    }

    /// One node from explicit vectors (rows may be batched).
    #[allow(clippy::too_many_arguments)]
    pub fn node(
        &self,
        tape: &mut Tape,
        x_n: Var,
        x_l: Var,
        x_r: Var,
        h_l: Var,
        h_r: Var,
        c_l: Var,
        c_r: Var,
    ) -> Result<NodeState, AutodiffError> {
        let xcat = tape.concat_cols(&[x_n, x_l, x_r])?;
        let hcat = tape.concat_cols(&[h_l, h_r])?;
        self.cell(tape, xcat, Some(hcat), Some((c_l, c_r)))
    }

    /// Plain recursive evaluation of one tree, one node at a time.
    pub fn forward(&self, tape: &mut Tape, tree: &GlyphTree) -> Result<TreeForward, AutodiffError> {
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        let mut nodes = Vec::with_capacity(tree.node_count());
        // Returns (input embedding, state) of the subtree root.
        fn go(
            enc: &TreeLstm,
            tape: &mut Tape,
            t: &GlyphTree,
            nodes: &mut Vec<NodeState>,
            d: usize,
            h: usize,
        ) -> Result<(Var, NodeState), AutodiffError> {
            match t {
                GlyphTree::Leaf(_) => {
                    let x = enc.embeds.lookup(tape, &[Some(t.token())])?;
                    let zx = tape.zeros(1, d);
                    let zh = tape.zeros(1, h);
                    let s = enc.node(tape, x, zx, zx, zh, zh, zh, zh)?;
                    nodes.push(s);
                    Ok((x, s))
                }
                GlyphTree::Op { left, right, .. } => {
                    let (xl, sl) = go(enc, tape, left, nodes, d, h)?;
                    let (xr, sr) = go(enc, tape, right, nodes, d, h)?;
                    let x = enc.embeds.lookup(tape, &[Some(t.token())])?;
                    let s = if enc.cfg.use_operators {
                        enc.node(tape, x, xl, xr, sl.h, sr.h, sl.c, sr.c)?
                    } else {
                        let z = tape.zeros(1, d);
                        enc.node(tape, z, z, z, sl.h, sr.h, sl.c, sr.c)?
                    };
                    nodes.push(s);
                    Ok((x, s))
                }
            }
        }
        go(self, tape, tree, &mut nodes, d, h)?;
        Ok(TreeForward { nodes })
    }

    /// Level-batched evaluation: all nodes of one level across the batch go
    /// through a single cell application.
    pub fn batch_forward(
        &self,
        tape: &mut Tape,
        trees: &[&GlyphTree],
        dropout: Option<&mut Dropout>,
    ) -> Result<TreeBatch, AutodiffError> {
        if trees.is_empty() {
            return Err(AutodiffError::Contract("empty tree batch".into()));
        }
        let s = build_level_schedule(trees);
        let tokens: Vec<Option<SeqToken>> = s
            .tokens
            .iter()
            .zip(&s.children)
            .map(|(&t, ch)| (ch.is_none() || self.cfg.use_operators).then_some(t))
            .collect();
        let mut x_all = self.embeds.lookup(tape, &tokens)?;
        if let Some(dr) = dropout {
            x_all = dr.apply(tape, x_all)?;
        }
        let mut levels: Vec<NodeState> = Vec::with_capacity(s.levels.len());
        for (lv, ids) in s.levels.iter().enumerate() {
            let mut px: [Vec<Pick>; 3] = Default::default();
            for &n in ids {
                match s.children[n] {
                    None => {
                        px[0].push(Some((0, n)));
                        px[1].push(None);
                        px[2].push(None);
                    }
                    Some((l, r)) if self.cfg.use_operators => {
                        px[0].push(Some((0, n)));
                        px[1].push(Some((0, l)));
                        px[2].push(Some((0, r)));
                    }
                    Some(_) => px.iter_mut().for_each(|p| p.push(None)),
                }
            }
            let [p0, p1, p2] = px;
            let xs = [tape.gather(&[x_all], p0)?, tape.gather(&[x_all], p1)?, tape.gather(&[x_all], p2)?];
            let xcat = tape.concat_cols(&xs)?;
            let state = if lv == 0 {
                self.cell(tape, xcat, None, None)?
            } else {
                let pick = |side: usize| -> Vec<Pick> {
                    ids.iter()
                        .map(|&n| {
                            let (l, r) = s.children[n].expect("inner node above level 0");
                            Some(s.slot[if side == 0 { l } else { r }])
                        })
                        .collect()
                };
                let hs: Vec<Var> = levels.iter().map(|st| st.h).collect();
                let cs: Vec<Var> = levels.iter().map(|st| st.c).collect();
                let h_l = tape.gather(&hs, pick(0))?;
                let h_r = tape.gather(&hs, pick(1))?;
                let c_l = tape.gather(&cs, pick(0))?;
                let c_r = tape.gather(&cs, pick(1))?;
                let hcat = tape.concat_cols(&[h_l, h_r])?;
                self.cell(tape, xcat, Some(hcat), Some((c_l, c_r)))?
            };
            levels.push(state);
        }
        let hs: Vec<Var> = levels.iter().map(|st| st.h).collect();
        let root_picks = (0..s.tree_count()).map(|t| Some(s.slot[s.root(t)])).collect();
        let roots = tape.gather(&hs, root_picks)?;
        Ok(TreeBatch { schedule: s, levels, roots })
    }
}

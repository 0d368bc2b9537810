use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use super::{AutodiffError, ParamId, ParamStore, Tensor};
use super::tensor::gemm;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row pick for [`Tape::gather`]: `(source index, row)`, or `None` for a zero row.
pub type Pick = Option<(usize, usize)>;

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, Range<usize>),
    Gather(Vec<Var>, Vec<Pick>),
    Sum(Var),
    SegmentMax(Var, Vec<usize>),
    Nll(Var, Vec<usize>, f64),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Record of executed primitive ops over a borrowed [`ParamStore`].
///
/// Ops are appended in execution order, so the node list is already
/// topologically sorted; [`Tape::backward`] walks it in reverse.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    gathered_rows: HashMap<ParamId, BTreeSet<usize>>,
    dense_use: BTreeSet<ParamId>,
}

/// Result of a backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    rows: Vec<Option<Vec<usize>>>,
    inputs: HashMap<Var, Tensor>,
}

impl Gradients {
    /// Gradient of a parameter; `None` if the loss does not depend on it.
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.params.get_mut(id.0).and_then(Option::as_mut)
    }

    /// Gradient of a parameter, zeros if unreached.
    pub fn get_or_zeros(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }

    /// Rows that received gradient, when the parameter was only used through
    /// row gathers; `None` means every row.
    pub fn touched_rows(&self, id: ParamId) -> Option<&[usize]> {
        self.rows.get(id.0).and_then(|r| r.as_deref())
    }

    /// Gradient with respect to a tensor created by [`Tape::input`].
    pub fn input(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor)> {
        self.params.iter_mut().enumerate().filter_map(|(i, g)| g.as_mut().map(|g| (ParamId(i), g)))
    }

    /// Adds `other` into `self` (for gradient accumulation across tapes).
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.params.len() < other.params.len() {
            self.params.resize(other.params.len(), None);
            self.rows.resize(other.params.len(), None);
        }
        for (i, g) in other.params.iter().enumerate() {
            let Some(g) = g else { continue };
            match &mut self.params[i] {
                Some(mine) => {
                    mine.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                    self.rows[i] = match (self.rows[i].take(), &other.rows[i]) {
                        (Some(a), Some(b)) => {
                            let merged: BTreeSet<usize> = a.into_iter().chain(b.iter().copied()).collect();
                            Some(merged.into_iter().collect())
                        }
                        _ => None,
                    };
                }
                slot => {
                    *slot = Some(g.clone());
                    self.rows[i] = other.rows[i].clone();
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|(_, g)| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for (_, g) in self.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        norm
    }
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lz;
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Tape<'p> {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            gathered_rows: HashMap::new(),
            dense_use: BTreeSet::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let n = &self.nodes[v.0];
        match (&n.value, &n.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn note_dense(&mut self, vars: &[Var]) {
        for v in vars {
            if let Op::Param(id) = self.nodes[v.0].op {
                self.dense_use.insert(id);
            }
        }
    }

    fn push(&mut self, value: Tensor, op: Op, operands: &[Var]) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        let requires_grad = operands.iter().any(|&o| self.rg(o));
        if !matches!(op, Op::Gather(..)) {
            self.note_dense(operands);
        }
        self.nodes.push(Node { value: Some(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Parameter leaf; repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(id), requires_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Constant leaf (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: Some(t), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Gradients::input`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: Some(t), op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::zeros(&[rows, cols]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::matrix(ta.rows(), ta.cols(), data).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let t = self.zip(a, b, |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let t = self.zip(a, b, |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ((r, c), (br, bc)) = (self.shape(a), self.shape(b));
        if br != 1 || bc != c {
            return Err(shape_err("add_row", format!("{r}x{c} + {br}x{bc}")));
        }
        let mut t = self.value(a).clone();
        let bias = self.value(b).data();
        for row in t.data_mut().chunks_mut(c) {
            row.iter_mut().zip(bias).for_each(|(x, y)| *x += y);
        }
        Ok(self.push(t, Op::AddRow(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let t = self.zip(a, b, |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Elementwise product with a constant tensor (dropout and length masks).
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(a);
        if (mask.rows(), mask.cols()) != (r, c) {
            return Err(shape_err("mul_const", format!("{r}x{c} vs {:?}", mask.shape())));
        }
        let data = self.value(a).data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let t = Tensor::matrix(r, c, data)?;
        Ok(self.push(t, Op::MulConst(a, mask), &[a]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a), &[a])
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut t = self.value(a).clone();
        let c = t.cols();
        for row in t.data_mut().chunks_mut(c) {
            let x = row.to_vec();
            softmax_row(&x, row);
        }
        self.push(t, Op::Softmax(a), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut t = self.value(a).clone();
        let c = t.cols();
        for row in t.data_mut().chunks_mut(c) {
            let x = row.to_vec();
            log_softmax_row(&x, row);
        }
        self.push(t, Op::LogSoftmax(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::Contract("concat of zero tensors".into()));
        };
        let rows = self.shape(first).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(shape_err("concat_cols", format!("{rows} rows vs {:?}", self.shape(bad))));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let t = Tensor::matrix(rows, total, out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(a);
        if cols.start >= cols.end || cols.end > c {
            return Err(shape_err("slice_cols", format!("{cols:?} of {r}x{c}")));
        }
        let t = self.value(a).block(0..r, cols.clone());
        Ok(self.push(t, Op::SliceCols(a, cols), &[a]))
    }

    /// Builds a matrix whose rows are picked from `sources` (all with equal
    /// column counts); `None` picks yield zero rows.
    pub fn gather(&mut self, sources: &[Var], picks: Vec<Pick>) -> Result<Var, AutodiffError> {
        let Some(&first) = sources.first() else {
            return Err(AutodiffError::Contract("gather from zero sources".into()));
        };
        let c = self.shape(first).1;
        if picks.is_empty() {
            return Err(AutodiffError::Contract("gather of zero rows".into()));
        }
        if let Some(&bad) = sources.iter().find(|&&s| self.shape(s).1 != c) {
            return Err(shape_err("gather", format!("{c} cols vs {:?}", self.shape(bad))));
        }
        let mut out = vec![0.0; picks.len() * c];
        for (i, p) in picks.iter().enumerate() {
            if let Some((s, r)) = *p {
                let src = sources
                    .get(s)
                    .ok_or_else(|| AutodiffError::Contract(format!("gather source {s} of {}", sources.len())))?;
                let (rows, _) = self.shape(*src);
                if r >= rows {
                    return Err(shape_err("gather", format!("row {r} of {rows}")));
                }
                out[i * c..(i + 1) * c].copy_from_slice(self.value(*src).row_slice(r));
            }
        }
        for p in picks.iter().flatten() {
            if let Op::Param(id) = self.nodes[sources[p.0].0].op {
                self.gathered_rows.entry(id).or_default().insert(p.1);
            }
        }
        let t = Tensor::matrix(picks.len(), c, out)?;
        Ok(self.push(t, Op::Gather(sources.to_vec(), picks), sources))
    }

    /// Row lookup in a single source.
    pub fn rows(&mut self, source: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        self.gather(&[source], rows.iter().map(|&r| Some((0, r))).collect())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Column-wise max over consecutive row segments of the given lengths.
    /// Output has one row per segment.
    pub fn segment_max(&mut self, a: Var, lens: &[usize]) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(a);
        if lens.is_empty() || lens.contains(&0) || lens.iter().sum::<usize>() != r {
            return Err(shape_err("segment_max", format!("segments {lens:?} over {r} rows")));
        }
        let v = self.value(a);
        let mut out = Vec::with_capacity(lens.len() * c);
        let mut arg = Vec::with_capacity(lens.len() * c);
        let mut start = 0;
        for &len in lens {
            for j in 0..c {
                let mut best = start;
                for i in start + 1..start + len {
                    if v.get(i, j) > v.get(best, j) {
                        best = i;
                    }
                }
                out.push(v.get(best, j));
                arg.push(best);
            }
            start += len;
        }
        let t = Tensor::matrix(lens.len(), c, out)?;
        Ok(self.push(t, Op::SegmentMax(a, arg), &[a]))
    }

    /// `−scale · Σᵢ a[i, targets[i]]`: negative log-likelihood when `a` holds
    /// log-probabilities.
    pub fn nll(&mut self, a: Var, targets: &[usize], scale: f64) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(a);
        if targets.len() != r {
            return Err(shape_err("nll", format!("{} targets for {r} rows", targets.len())));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= c) {
            return Err(AutodiffError::Contract(format!("target class {t} outside {c} classes")));
        }
        let v = self.value(a);
        let s: f64 = targets.iter().enumerate().map(|(i, &t)| v.get(i, t)).sum();
        Ok(self.push(Tensor::scalar(-scale * s), Op::Nll(a, targets.to_vec(), scale), &[a]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients {
            params: vec![None; self.store.len()],
            rows: vec![None; self.store.len()],
            inputs: HashMap::new(),
        };

        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], v: Var, len: usize) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let len = g.len();
            match &node.op {
                Op::Param(id) => {
                    let t = self.store.get(*id);
                    out.params[id.0] = Some(Tensor::new(t.shape().to_vec(), g)?);
                    out.rows[id.0] = if self.dense_use.contains(id) {
                        None
                    } else {
                        self.gathered_rows.get(id).map(|s| s.iter().copied().collect())
                    };
                }
                Op::Leaf => {
                    let t = self.value(Var(i));
                    out.inputs.insert(Var(i), Tensor::new(t.shape().to_vec(), g)?);
                }
                Op::MatMul(a, b) => {
                    let ((m, k), (_, n)) = (self.shape(*a), self.shape(*b));
                    if self.rg(*a) {
                        let bv = self.value(*b).data();
                        gemm(m, n, k, 1.0, &g, false, bv, true, 1.0, acc(&mut grads, *a, m * k));
                    }
                    if self.rg(*b) {
                        let av = self.value(*a).data();
                        gemm(k, m, n, 1.0, av, true, &g, false, 1.0, acc(&mut grads, *b, k * n));
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.rg(*a) {
                        acc(&mut grads, *a, len).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, len).iter_mut().zip(&g).for_each(|(x, y)| *x += sign * y);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, len).iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if self.rg(*b) {
                        let c = self.shape(*b).1;
                        let gb = acc(&mut grads, *b, c);
                        for row in g.chunks(c) {
                            gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b).data();
                        let ga = acc(&mut grads, *a, len);
                        for j in 0..len {
                            ga[j] += g[j] * bv[j];
                        }
                    }
                    if self.rg(*b) {
                        let av = self.value(*a).data();
                        let gb = acc(&mut grads, *b, len);
                        for j in 0..len {
                            gb[j] += g[j] * av[j];
                        }
                    }
                }
                Op::MulConst(a, m) => {
                    let ga = acc(&mut grads, *a, len);
                    for ((x, y), mv) in ga.iter_mut().zip(&g).zip(m.data()) {
                        *x += y * mv;
                    }
                }
                Op::Scale(a, s) => {
                    acc(&mut grads, *a, len).iter_mut().zip(&g).for_each(|(x, y)| *x += s * y);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga = acc(&mut grads, *a, len);
                    for j in 0..len {
                        ga[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga = acc(&mut grads, *a, len);
                    for j in 0..len {
                        ga[j] += g[j] * (1.0 - y[j] * y[j]);
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let c = y.cols();
                    let ga = acc(&mut grads, *a, len);
                    for (r, (gr, yr)) in g.chunks(c).zip(y.data().chunks(c)).enumerate() {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            ga[r * c + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let c = y.cols();
                    let ga = acc(&mut grads, *a, len);
                    for (r, (gr, yr)) in g.chunks(c).zip(y.data().chunks(c)).enumerate() {
                        let total: f64 = gr.iter().sum();
                        for j in 0..c {
                            ga[r * c + j] += gr[j] - yr[j].exp() * total;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = self.value(Var(i)).cols();
                    let rows = len / total;
                    let mut off = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.rg(*p) {
                            let gp = acc(&mut grads, *p, rows * w);
                            for r in 0..rows {
                                let src = &g[r * total + off..r * total + off + w];
                                gp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                            }
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, cols) => {
                    let (rows, c) = self.shape(*a);
                    let w = cols.len();
                    let ga = acc(&mut grads, *a, rows * c);
                    for r in 0..rows {
                        let dst = &mut ga[r * c + cols.start..r * c + cols.end];
                        dst.iter_mut().zip(&g[r * w..(r + 1) * w]).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Gather(sources, picks) => {
                    let c = self.shape(sources[0]).1;
                    for (row, p) in picks.iter().enumerate() {
                        let Some((s, r)) = *p else { continue };
                        let src = sources[s];
                        if !self.rg(src) {
                            continue;
                        }
                        let n = self.value(src).len();
                        let gs = acc(&mut grads, src, n);
                        gs[r * c..(r + 1) * c].iter_mut().zip(&g[row * c..(row + 1) * c]).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    acc(&mut grads, *a, n).iter_mut().for_each(|x| *x += g[0]);
                }
                Op::SegmentMax(a, arg) => {
                    let (rows, c) = self.shape(*a);
                    let ga = acc(&mut grads, *a, rows * c);
                    for (k, &src_row) in arg.iter().enumerate() {
                        ga[src_row * c + k % c] += g[k];
                    }
                }
                Op::Nll(a, targets, scale) => {
                    let (rows, c) = self.shape(*a);
                    let ga = acc(&mut grads, *a, rows * c);
                    for (r, &t) in targets.iter().enumerate() {
                        ga[r * c + t] -= scale * g[0];
                    }
                }
            }
        }
        Ok(out)
    }
}

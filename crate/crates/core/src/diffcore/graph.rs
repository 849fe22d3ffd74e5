use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiffError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Stack vertically (row count grows).
    Rows,
    /// Stack horizontally (column count grows).
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>, Axis),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    Dropout(Var, Vec<f64>),
    Embedding(Var, Vec<usize>),
    AttentionPool { h: Var, scores: Var, alpha: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    Bce { logits: Var, targets: Tensor },
    Grl(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// A reverse-mode computation graph.
///
/// Nodes are appended in evaluation order, which is a topological order;
/// [`Graph::backward`] walks it in reverse and visits every node once,
/// summing gradient contributions over all paths.
///
/// A graph built with [`Graph::new`] is in evaluation mode and dropout is the
/// identity. [`Graph::training`] enables dropout with masks drawn from a
/// seeded ChaCha stream.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    dropout_rng: Option<ChaCha8Rng>,
    grl_mode: GrlMode,
}

/// How reversal nodes evaluate their forward pass. Only gradient checking
/// uses anything but `Identity`.
#[derive(Debug, Default)]
pub(crate) enum GrlMode {
    #[default]
    Identity,
    /// Identity, remembering each input in call order.
    Record(Vec<Tensor>),
    /// `r − λ(x − r)` around the recorded input `r` of the same call, so a
    /// finite difference through the node sees its Jacobian `−λ·I`.
    Linearize(Vec<Tensor>, usize),
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::Shape { op, left: a.shape(), right: b.shape() }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), dropout_rng: None, grl_mode: GrlMode::Identity }
    }

    pub fn training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            dropout_rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            grl_mode: GrlMode::Identity,
        }
    }

    pub(crate) fn set_grl_mode(&mut self, mode: GrlMode) {
        self.grl_mode = mode;
    }

    pub(crate) fn take_grl_mode(&mut self) -> GrlMode {
        std::mem::take(&mut self.grl_mode)
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A node that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A node that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub(crate) fn shared_leaf(&mut self, value: Arc<Tensor>, needs_grad: bool) -> Var {
        self.push_arc(value, Op::Leaf, needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`backward`](Self::backward) root with respect
    /// to `v`, if any flowed into it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    // -- linear algebra ------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = ta.matmul(tb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Elementwise sum. `b` may also be a `1 × cols` row broadcast over the
    /// rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        if ta.shape() == tb.shape() {
            let out = ta.zip_map(tb, |x, y| x + y);
            return Ok(self.push(out, Op::Add(a, b), ng));
        }
        if tb.rows() == 1 && tb.cols() == ta.cols() {
            let mut out = ta.clone();
            let row = tb.data().to_vec();
            for r in 0..out.rows() {
                for (o, b) in out.row_mut(r).iter_mut().zip(&row) {
                    *o += b;
                }
            }
            return Ok(self.push(out, Op::AddRow(a, b), ng));
        }
        Err(shape_err("add", ta, tb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let out = ta.zip_map(tb, |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let out = ta.zip_map(tb, |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        let ng = self.needs(a);
        self.push(out, Op::Affine(a, scale), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    // -- elementwise nonlinearities -----------------------------------------

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let ng = self.needs(a);
        self.push(out, Op::Softmax(a), ng)
    }

    // -- structure -----------------------------------------------------------

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, DiffError> {
        let first = parts.first().ok_or(DiffError::Empty("concat"))?;
        let t0 = self.value(*first).clone();
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != t0.cols() {
                        return Err(shape_err("concat(rows)", &t0, t));
                    }
                    data.extend_from_slice(t.data());
                    rows += t.rows();
                }
                Tensor::from_vec(rows, t0.cols(), data)
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != t0.rows() {
                        return Err(shape_err("concat(cols)", &t0, t));
                    }
                    cols += t.cols();
                }
                let mut out = Tensor::zeros(t0.rows(), cols);
                for r in 0..t0.rows() {
                    let mut off = 0;
                    for &p in parts {
                        let t = self.value(p);
                        out.row_mut(r)[off..off + t.cols()].copy_from_slice(t.row(r));
                        off += t.cols();
                    }
                }
                out
            }
        };
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        let t = self.value(a);
        if start + len > t.rows() || len == 0 {
            return Err(DiffError::Slice { op: "slice_rows", start, len, extent: t.rows() });
        }
        let out = Tensor::from_vec(len, t.cols(), t.data()[start * t.cols()..(start + len) * t.cols()].to_vec());
        let ng = self.needs(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        let t = self.value(a);
        if start + len > t.cols() || len == 0 {
            return Err(DiffError::Slice { op: "slice_cols", start, len, extent: t.cols() });
        }
        let mut out = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            out.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    // -- reductions ----------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        let ng = self.needs(a);
        self.push(out, Op::Mean(a), ng)
    }

    // -- layers --------------------------------------------------------------

    /// Inverted dropout: at train time each entry is zeroed with probability
    /// `rate` and survivors are scaled by `1 / (1 - rate)`. In evaluation
    /// mode (or with `rate == 0`) the input is returned unchanged.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else { return a };
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep }).collect();
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows(), t.cols(), t.data().iter().zip(&mask).map(|(x, m)| x * m).collect());
        let ng = self.needs(a);
        self.push(out, Op::Dropout(a, mask), ng)
    }

    /// Gathers rows `ids` of `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, DiffError> {
        let t = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.rows()) {
            return Err(DiffError::Index { op: "embedding", index: bad, extent: t.rows() });
        }
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(ids.len(), t.cols(), data);
        let ng = self.needs(table);
        Ok(self.push(out, Op::Embedding(table, ids.to_vec()), ng))
    }

    /// Masked attention pooling: `softmax(scores)` over the unmasked rows of
    /// `h`, then the weighted sum of those rows (`1 × d`). `scores` is
    /// `n × 1`; if every row is masked the result is zero.
    pub fn attention_pool(&mut self, h: Var, scores: Var, mask: &[bool]) -> Result<Var, DiffError> {
        let (th, ts) = (self.value(h), self.value(scores));
        if ts.cols() != 1 || ts.rows() != th.rows() || mask.len() != th.rows() {
            return Err(shape_err("attention_pool", th, ts));
        }
        let max = (0..ts.rows())
            .filter(|&i| mask[i])
            .map(|i| ts.get(i, 0))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut alpha: Vec<f64> =
            (0..ts.rows()).map(|i| if mask[i] { (ts.get(i, 0) - max).exp() } else { 0.0 }).collect();
        let z: f64 = alpha.iter().sum();
        if z > 0.0 {
            for a in &mut alpha {
                *a /= z;
            }
        }
        let mut out = Tensor::zeros(1, th.cols());
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (o, x) in out.data_mut().iter_mut().zip(th.row(i)) {
                    *o += a * x;
                }
            }
        }
        let ng = self.needs(h) || self.needs(scores);
        Ok(self.push(out, Op::AttentionPool { h, scores, alpha }, ng))
    }

    /// Softmax cross-entropy summed over rows; `targets[r]` is the class of row `r`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, DiffError> {
        let t = self.value(logits);
        if targets.len() != t.rows() {
            return Err(DiffError::Shape { op: "cross_entropy", left: t.shape(), right: (targets.len(), 1) });
        }
        if let Some(&bad) = targets.iter().find(|&&k| k >= t.cols()) {
            return Err(DiffError::Index { op: "cross_entropy", index: bad, extent: t.cols() });
        }
        let mut probs = t.clone();
        let mut loss = 0.0;
        for (r, &k) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[k];
            for x in row.iter_mut() {
                *x = (*x - lse).exp();
            }
        }
        let ng = self.needs(logits);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), probs }, ng))
    }

    /// Binary cross-entropy with logits, summed over every element.
    /// `targets` has the shape of `logits` with entries in `[0, 1]`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Tensor) -> Result<Var, DiffError> {
        let t = self.value(logits);
        if t.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", t, &targets));
        }
        let loss: f64 = t.data().iter().zip(targets.data()).map(|(&x, &y)| softplus(x) - y * x).sum();
        let ng = self.needs(logits);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { logits, targets }, ng))
    }

    /// Gradient reversal: identity forward, `-lambda · g` backward.
    pub fn grl(&mut self, a: Var, lambda: f64) -> Var {
        let value = match &mut self.grl_mode {
            GrlMode::Identity => Arc::clone(&self.nodes[a.0].value),
            GrlMode::Record(seen) => {
                seen.push(self.nodes[a.0].value.as_ref().clone());
                Arc::clone(&self.nodes[a.0].value)
            }
            GrlMode::Linearize(refs, cursor) => {
                let r = &refs[*cursor];
                *cursor += 1;
                Arc::new(r.zip_map(&self.nodes[a.0].value, |r, x| r - lambda * (x - r)))
            }
        };
        let ng = self.needs(a);
        self.push_arc(value, Op::Grl(a, lambda), ng)
    }

    /// `x W + b` for a `1 × in` or `n × in` input.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// One GRU step with gates packed as `[reset | update | candidate]`.
    ///
    /// `x_proj` is the precomputed `x W_x + b_x` (`1 × 3H`), `h` the previous
    /// state (`1 × H`), `w_h` is `H × 3H` and `b_h` is `1 × 3H`:
    ///
    /// ```text
    /// r  = σ(x_r + h W_r + b_r)
    /// z  = σ(x_z + h W_z + b_z)
    /// n  = tanh(x_n + r ⊙ (h W_n + b_n))
    /// h' = n + z ⊙ (h − n)
    /// ```
    pub fn gru_cell(&mut self, x_proj: Var, h: Var, w_h: Var, b_h: Var) -> Result<Var, DiffError> {
        let hidden = self.value(h).cols();
        if self.value(x_proj).cols() != 3 * hidden || self.value(w_h).shape() != (hidden, 3 * hidden) {
            return Err(shape_err("gru_cell", self.value(x_proj), self.value(w_h)));
        }
        let h_proj = self.linear(h, w_h, b_h)?;
        let xr = self.slice_cols(x_proj, 0, hidden)?;
        let xz = self.slice_cols(x_proj, hidden, hidden)?;
        let xn = self.slice_cols(x_proj, 2 * hidden, hidden)?;
        let hr = self.slice_cols(h_proj, 0, hidden)?;
        let hz = self.slice_cols(h_proj, hidden, hidden)?;
        let hn = self.slice_cols(h_proj, 2 * hidden, hidden)?;
        let r_in = self.add(xr, hr)?;
        let r = self.sigmoid(r_in);
        let z_in = self.add(xz, hz)?;
        let z = self.sigmoid(z_in);
        let gated = self.mul(r, hn)?;
        let n_in = self.add(xn, gated)?;
        let n = self.tanh(n_in);
        let diff = self.sub(h, n)?;
        let keep = self.mul(z, diff)?;
        self.add(n, keep)
    }

    // -- backward ------------------------------------------------------------

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse pass from a `1 × 1` root. Previous gradients are discarded.
    pub fn backward(&mut self, root: Var) -> Result<(), DiffError> {
        if self.value(root).shape() != (1, 1) {
            return Err(DiffError::NotScalar(self.value(root).shape()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].needs_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        // Temporarily move the op out to appease the borrow checker.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.needs(a) {
                    let d = g.matmul_nt(self.value(b));
                    self.accumulate(a, d);
                }
                if self.needs(b) {
                    let d = self.value(a).matmul_tn(g);
                    self.accumulate(b, d);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::AddRow(a, b) => {
                self.accumulate(a, g.clone());
                if self.needs(b) {
                    let mut d = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in d.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(b, d);
                }
            }
            &Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.scale(-1.0));
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let d = g.zip_map(self.value(b), |g, y| g * y);
                    self.accumulate(a, d);
                }
                if self.needs(b) {
                    let d = g.zip_map(self.value(a), |g, x| g * x);
                    self.accumulate(b, d);
                }
            }
            &Op::Affine(a, s) => self.accumulate(a, g.scale(s)),
            &Op::Tanh(a) => {
                let d = g.zip_map(&self.nodes[i].value, |g, y| g * (1.0 - y * y));
                self.accumulate(a, d);
            }
            &Op::Sigmoid(a) => {
                let d = g.zip_map(&self.nodes[i].value, |g, y| g * y * (1.0 - y));
                self.accumulate(a, d);
            }
            &Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(g, y)| g * y).sum();
                    for ((o, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yv * (gv - dot);
                    }
                }
                self.accumulate(a, d);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.value(p).shape();
                    let d = match axis {
                        Axis::Rows => {
                            let d = Tensor::from_vec(pr, pc, g.data()[offset * pc..(offset + pr) * pc].to_vec());
                            offset += pr;
                            d
                        }
                        Axis::Cols => {
                            let mut d = Tensor::zeros(pr, pc);
                            for r in 0..pr {
                                d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + pc]);
                            }
                            offset += pc;
                            d
                        }
                    };
                    self.accumulate(p, d);
                }
            }
            &Op::SliceRows(a, start) => {
                if self.needs(a) {
                    let (r, c) = self.value(a).shape();
                    let mut d = Tensor::zeros(r, c);
                    d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    self.accumulate(a, d);
                }
            }
            &Op::SliceCols(a, start) => {
                if self.needs(a) {
                    let (r, c) = self.value(a).shape();
                    let mut d = Tensor::zeros(r, c);
                    for row in 0..r {
                        d.row_mut(row)[start..start + g.cols()].copy_from_slice(g.row(row));
                    }
                    self.accumulate(a, d);
                }
            }
            &Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, Tensor::filled(r, c, g.item()));
            }
            &Op::Mean(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::Dropout(a, mask) => {
                let d = Tensor::from_vec(g.rows(), g.cols(), g.data().iter().zip(mask).map(|(g, m)| g * m).collect());
                self.accumulate(*a, d);
            }
            Op::Embedding(table, ids) => {
                if self.needs(*table) {
                    let (r, c) = self.value(*table).shape();
                    let mut d = Tensor::zeros(r, c);
                    for (k, &id) in ids.iter().enumerate() {
                        for (o, x) in d.row_mut(id).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    self.accumulate(*table, d);
                }
            }
            Op::AttentionPool { h, scores, alpha } => {
                let th = self.value(*h);
                let n = th.rows();
                if self.needs(*h) {
                    let mut d = Tensor::zeros(n, th.cols());
                    for (k, &a) in alpha.iter().enumerate() {
                        for (o, x) in d.row_mut(k).iter_mut().zip(g.data()) {
                            *o = a * x;
                        }
                    }
                    self.accumulate(*h, d);
                }
                if self.needs(*scores) {
                    let th = self.value(*h);
                    let d_alpha: Vec<f64> =
                        (0..n).map(|k| th.row(k).iter().zip(g.data()).map(|(x, g)| x * g).sum()).collect();
                    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
                    let ds: Vec<f64> = alpha.iter().zip(&d_alpha).map(|(a, d)| a * (d - mean)).collect();
                    self.accumulate(*scores, Tensor::from_vec(n, 1, ds));
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let mut d = probs.clone();
                for (r, &k) in targets.iter().enumerate() {
                    d.row_mut(r)[k] -= 1.0;
                }
                let s = g.item();
                self.accumulate(*logits, d.scale(s));
            }
            Op::Bce { logits, targets } => {
                let s = g.item();
                let d = self.value(*logits).zip_map(targets, |x, y| s * (sigmoid(x) - y));
                self.accumulate(*logits, d);
            }
            &Op::Grl(a, lambda) => self.accumulate(a, g.scale(-lambda)),
        }
        self.nodes[i].op = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_softmax() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(1, 7, 0.3));
        let y = g.softmax(x);
        for &p in g.value(y).data() {
            assert_relative_eq!(p, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(2, 3, vec![100.0, -3.0, 2.5, 0.0, 1e-3, -50.0]));
        let y = g.softmax(x);
        for r in 0..2 {
            assert!((g.value(y).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row_vector(vec![0.5, -1.0, 2.0]));
        let loss = g.cross_entropy(x, &[1]).unwrap();
        g.backward(loss).unwrap();
        let logits = [0.5f64, -1.0, 2.0];
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        let grad = g.grad(x).unwrap();
        for (k, l) in logits.iter().enumerate() {
            let expect = l.exp() / z - if k == 1 { 1.0 } else { 0.0 };
            assert_relative_eq!(grad.get(0, k), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_unmasked_position_passes_through() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let s = g.constant(Tensor::from_vec(3, 1, vec![9.0, -2.0, 0.5]));
        let out = g.attention_pool(h, s, &[false, true, false]).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0]);
    }

    #[test]
    fn fully_masked_pool_is_zero() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::filled(2, 2, 1.0));
        let s = g.constant(Tensor::zeros(2, 1));
        let out = g.attention_pool(h, s, &[false, false]).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn grl_forward_is_bitwise_identity() {
        let mut g = Graph::new();
        let data = vec![0.1, -7.25, 1e-300, f64::MAX, -0.0];
        let x = g.leaf(Tensor::row_vector(data.clone()));
        let y = g.grl(x, 0.7);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.value(y).data()), bits(&data));
    }

    #[test]
    fn grl_scales_gradient() {
        // f(u) = u², u = grl(x, λ): df/dx = -λ·2x
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let u = g.grl(x, 0.5);
        let f = g.mul(u, u).unwrap();
        g.backward(f).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), -3.0);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let u = g.grl(x, 0.0);
        let f = g.mul(u, u).unwrap();
        g.backward(f).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 0.0);
    }

    #[test]
    fn duplicated_subgraph_doubles_gradient() {
        let build = |twice: bool| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::row_vector(vec![0.3, -0.2]));
            let t = g.tanh(x);
            let s = g.sum(t);
            let root = if twice {
                let t2 = g.tanh(x);
                let s2 = g.sum(t2);
                g.add(s, s2).unwrap()
            } else {
                s
            };
            g.backward(root).unwrap();
            g.grad(x).unwrap().clone()
        };
        let once = build(false);
        let twice = build(true);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let e = g.matmul(a, b).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn dropout_is_identity_in_eval_and_scaled_in_training() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(1, 100, 1.0));
        assert_eq!(g.dropout(x, 0.5), x);

        let mut g = Graph::training(3);
        let x = g.constant(Tensor::filled(1, 1000, 1.0));
        let y = g.dropout(x, 0.25);
        let vals = g.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((650..850).contains(&kept), "{kept}");
    }

    #[test]
    fn bce_at_zero_logits_is_ln2_per_label() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(1, 10));
        let l = g.bce_with_logits(x, Tensor::from_vec(1, 10, (0..10).map(|i| (i % 2) as f64).collect())).unwrap();
        assert_relative_eq!(g.value(l).item(), 10.0 * 2f64.ln(), epsilon = 1e-12);
    }
}

//! Reverse-mode differentiation over coarse matrix operations.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node whose inputs are earlier nodes, so the node order is a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Parameters can be borrowed into the tape with [`Tape::param`] so that large
//! embedding tables are not copied per batch.
//!
//! All operations work on the row/column view of their operands: rank-1
//! tensors are one row, rank-3 tensors fold their leading axes into rows.

use std::borrow::Cow;

use super::{dims2, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols { src: Var, start: usize },
    GatherRows { table: Var, idx: Vec<usize> },
    Relu(Var),
    Sigmoid(Var),
    Dropout { src: Var, keep: Vec<f64> },
    Softmax { src: Var, mask: Vec<bool> },
    LayerNorm { src: Var, inv_std: Vec<f64> },
    Bce { logits: Var, targets: Vec<f64>, mask: Vec<bool> },
    Sum(Var),
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    op: Op,
    needs_grad: bool,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `var` into `tensor.grad`; a no-op when `var`
    /// received no gradient.
    pub fn accumulate_into(&self, var: Var, tensor: &mut Tensor) -> Result<()> {
        match self.get(var) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// `out += a · b` for row-major `a` [m×k] and `b` [k×n]. Zero entries of `a`
/// are skipped, so masked attention weights never read their value rows.
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a · bᵀ` for `a` [m×k], `b` [n×k].
fn gemm_t_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out += aᵀ · b` for `a` [m×k], `b` [m×n], `out` [k×n].
fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        check_finite(name, &value)?;
        self.nodes.push(Node { shape, value: Cow::Owned(value), op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node<'a> {
        &self.nodes[v.0]
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        dims2(&self.nodes[v.0].shape)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.to_vec()).expect("tape values are validated on insertion")
    }

    /// Copies `t` onto the tape; tracks gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad();
        let shape = t.shape().to_vec();
        self.nodes.push(Node { shape, value: Cow::Owned(t.into_data()), op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf that never receives a gradient.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(t))
    }

    /// Borrows a parameter tensor without copying it.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Leaf,
            needs_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product `a` [m×k] · `b` [k×n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let ng = self.needs(&[a, b]);
        self.push(vec![m, n], out, Op::MatMul(a, b), ng, "matmul")
    }

    /// `a` [m×k] · `b`ᵀ where `b` is [n×k].
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul_t", format!("[{m}x{k}] x [{n}x{k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        gemm_t_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let ng = self.needs(&[a, b]);
        self.push(vec![m, n], out, Op::MatMulT(a, b), ng, "matmul_t")
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.node(a).value.len() != self.node(b).value.len() || self.dims(a) != self.dims(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.needs(&[a, b]);
        self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng, "add")
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let ng = self.needs(&[a, b]);
        self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), ng, "mul")
    }

    /// Adds the vector `bias` [n] to every row of `a` [m×n].
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.node(bias).value.len() != n {
            return Err(shape_err("add_row", format!("{:?} + row {:?}", self.shape(a), self.shape(bias))));
        }
        let bv = self.value(bias);
        let out = self.value(a).chunks(n).flat_map(|r| r.iter().zip(bv).map(|(x, y)| x + y)).collect();
        let ng = self.needs(&[a, bias]);
        self.push(vec![m, n], out, Op::AddRow(a, bias), ng, "add_row")
    }

    /// Multiplies every row of `a` [m×n] elementwise by `gain` [n].
    pub fn mul_row(&mut self, a: Var, gain: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.node(gain).value.len() != n {
            return Err(shape_err("mul_row", format!("{:?} * row {:?}", self.shape(a), self.shape(gain))));
        }
        let gv = self.value(gain);
        let out = self.value(a).chunks(n).flat_map(|r| r.iter().zip(gv).map(|(x, y)| x * y)).collect();
        let ng = self.needs(&[a, gain]);
        self.push(vec![m, n], out, Op::MulRow(a, gain), ng, "mul_row")
    }

    /// Scales row `i` of `mat` [m×n] by `col[i]`, `col` being [m×1].
    pub fn scale_rows(&mut self, col: Var, mat: Var) -> Result<Var> {
        let (m, n) = self.dims(mat);
        if self.node(col).value.len() != m {
            return Err(shape_err("scale_rows", format!("col {:?} for {:?}", self.shape(col), self.shape(mat))));
        }
        let cv = self.value(col);
        let out = self
            .value(mat)
            .chunks(n)
            .zip(cv)
            .flat_map(|(r, c)| r.iter().map(move |x| c * x))
            .collect();
        let ng = self.needs(&[col, mat]);
        self.push(vec![m, n], out, Op::ScaleRows(col, mat), ng, "scale_rows")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, c), ng, "scale")
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let m = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(shape_err("concat", "row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let ng = self.needs(parts);
        self.push(vec![m, total], out, Op::ConcatCols(parts.to_vec()), ng, "concat")
    }

    /// Columns `start..start+len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if len == 0 || start + len > n {
            return Err(shape_err("slice_cols", format!("cols {start}..{} of {n}", start + len)));
        }
        let v = self.value(a);
        let out = (0..m).flat_map(|i| v[i * n + start..i * n + start + len].iter().copied()).collect();
        let ng = self.needs(&[a]);
        self.push(vec![m, len], out, Op::SliceCols { src: a, start }, ng, "slice_cols")
    }

    /// Rows `idx` of `table`, in order (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(table);
        if idx.is_empty() {
            return Err(shape_err("gather_rows", "empty index list".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Index { what: "embedding table", index: bad, len: rows });
        }
        let v = self.value(table);
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
        }
        let ng = self.needs(&[table]);
        self.push(vec![idx.len(), cols], out, Op::GatherRows { table, idx: idx.to_vec() }, ng, "gather_rows")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Relu(a), ng, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a), ng, "sigmoid")
    }

    /// Inverted dropout: with `training` each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`. Identity
    /// otherwise, and also when `p == 0` (no random draws are made).
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, rng: &mut super::SeededRng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let keep: Vec<f64> = (0..self.node(a).value.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { scale })
            .collect();
        let out = self.value(a).iter().zip(&keep).map(|(x, k)| x * k).collect();
        let ng = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), out, Op::Dropout { src: a, keep }, ng, "dropout")
    }

    /// Row-wise softmax restricted to entries where `mask` is true. Masked
    /// entries get exactly zero and never enter the max or the normaliser.
    /// A row with no unmasked entry is an [`Error::EmptyContext`].
    pub fn softmax_masked(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        self.softmax_impl(logits, mask, false)
    }

    /// Like [`Tape::softmax_masked`] but fully masked rows produce all zeros.
    /// Used for attention rows with an empty history.
    pub fn softmax_masked_or_zero(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        self.softmax_impl(logits, mask, true)
    }

    fn softmax_impl(&mut self, logits: Var, mask: &[bool], allow_empty: bool) -> Result<Var> {
        let (m, n) = self.dims(logits);
        if mask.len() != m * n {
            return Err(shape_err("softmax_masked", format!("mask of {} for {:?}", mask.len(), self.shape(logits))));
        }
        let v = self.value(logits);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &v[i * n..(i + 1) * n];
            let mrow = &mask[i * n..(i + 1) * n];
            let max = row
                .iter()
                .zip(mrow)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                if allow_empty {
                    continue;
                }
                return Err(Error::EmptyContext);
            }
            let orow = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if mrow[j] {
                    let e = (row[j] - max).exp();
                    orow[j] = e;
                    total += e;
                }
            }
            for j in 0..n {
                if mrow[j] {
                    orow[j] /= total;
                }
            }
        }
        let ng = self.needs(&[logits]);
        self.push(vec![m, n], out, Op::Softmax { src: logits, mask: mask.to_vec() }, ng, "softmax_masked")
    }

    /// Per-row standardisation `(x - mean) / sqrt(var + eps)`, no affine part.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.dims(a);
        let v = self.value(a);
        let mut out = vec![0.0; m * n];
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = &v[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[i * n + j] = (row[j] - mean) * is;
            }
            inv_std.push(is);
        }
        let ng = self.needs(&[a]);
        self.push(vec![m, n], out, Op::LayerNorm { src: a, inv_std }, ng, "layer_norm")
    }

    /// Summed binary cross-entropy on logits over positions where `mask` is
    /// true, evaluated as `max(η,0) - η·r + log(1 + e^{-|η|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], mask: &[bool]) -> Result<Var> {
        let n = self.node(logits).value.len();
        if targets.len() != n || mask.len() != n {
            return Err(shape_err(
                "bce_with_logits",
                format!("{n} logits, {} targets, {} mask entries", targets.len(), mask.len()),
            ));
        }
        if targets.iter().any(|&r| r != 0.0 && r != 1.0) {
            return Err(shape_err("bce_with_logits", "targets must be 0 or 1".into()));
        }
        let loss: f64 = self
            .value(logits)
            .iter()
            .zip(targets)
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|((&eta, &r), _)| eta.max(0.0) - eta * r + (-eta.abs()).exp().ln_1p())
            .sum();
        let ng = self.needs(&[logits]);
        self.push(
            vec![1],
            vec![loss],
            Op::Bce { logits, targets: targets.to_vec(), mask: mask.to_vec() },
            ng,
            "bce_with_logits",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        let ng = self.needs(&[a]);
        self.push(vec![1], vec![s], Op::Sum(a), ng, "sum")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::NotScalar(ln.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: op_name(&self.nodes[i].op) });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let target = &self.nodes[v.0];
            if !target.needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                send(*a, &mut |s| gemm_t_acc(g, bv, s, m, n, k));
                send(*b, &mut |s| gemm_tn_acc(av, g, s, m, k, n));
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                let (av, bv) = (self.value(*a), self.value(*b));
                // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                send(*a, &mut |s| gemm_acc(g, bv, s, m, n, k));
                send(*b, &mut |s| gemm_tn_acc(g, av, s, m, n, k));
            }
            Op::Add(a, b) => {
                send(*a, &mut |s| add_into(s, g));
                send(*b, &mut |s| add_into(s, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                send(*a, &mut |s| {
                    for ((s, g), y) in s.iter_mut().zip(g).zip(bv) {
                        *s += g * y;
                    }
                });
                send(*b, &mut |s| {
                    for ((s, g), x) in s.iter_mut().zip(g).zip(av) {
                        *s += g * x;
                    }
                });
            }
            Op::AddRow(a, bias) => {
                let n = self.dims(*a).1;
                send(*a, &mut |s| add_into(s, g));
                send(*bias, &mut |s| {
                    for row in g.chunks(n) {
                        add_into(s, row);
                    }
                });
            }
            Op::MulRow(a, gain) => {
                let n = self.dims(*a).1;
                let (av, gv) = (self.value(*a), self.value(*gain));
                send(*a, &mut |s| {
                    for (srow, grow) in s.chunks_mut(n).zip(g.chunks(n)) {
                        for ((s, g), w) in srow.iter_mut().zip(grow).zip(gv) {
                            *s += g * w;
                        }
                    }
                });
                send(*gain, &mut |s| {
                    for (grow, arow) in g.chunks(n).zip(av.chunks(n)) {
                        for ((s, g), x) in s.iter_mut().zip(grow).zip(arow) {
                            *s += g * x;
                        }
                    }
                });
            }
            Op::ScaleRows(col, mat) => {
                let n = self.dims(*mat).1;
                let (cv, mv) = (self.value(*col), self.value(*mat));
                send(*col, &mut |s| {
                    for ((s, grow), mrow) in s.iter_mut().zip(g.chunks(n)).zip(mv.chunks(n)) {
                        *s += grow.iter().zip(mrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
                send(*mat, &mut |s| {
                    for ((srow, grow), c) in s.chunks_mut(n).zip(g.chunks(n)).zip(cv) {
                        for (s, g) in srow.iter_mut().zip(grow) {
                            *s += g * c;
                        }
                    }
                });
            }
            Op::Scale(a, c) => {
                send(*a, &mut |s| {
                    for (s, g) in s.iter_mut().zip(g) {
                        *s += g * c;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = self.dims(Var(id)).1;
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    send(p, &mut |s| {
                        for (srow, grow) in s.chunks_mut(c).zip(g.chunks(total)) {
                            add_into(srow, &grow[offset..offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceCols { src, start } => {
                let n = self.dims(*src).1;
                let len = self.dims(Var(id)).1;
                send(*src, &mut |s| {
                    for (srow, grow) in s.chunks_mut(n).zip(g.chunks(len)) {
                        add_into(&mut srow[*start..*start + len], grow);
                    }
                });
            }
            Op::GatherRows { table, idx } => {
                let c = self.dims(*table).1;
                send(*table, &mut |s| {
                    for (grow, &i) in g.chunks(c).zip(idx) {
                        add_into(&mut s[i * c..(i + 1) * c], grow);
                    }
                });
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                send(*a, &mut |s| {
                    for ((s, g), x) in s.iter_mut().zip(g).zip(av) {
                        if *x > 0.0 {
                            *s += g;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                send(*a, &mut |s| {
                    for ((s, g), y) in s.iter_mut().zip(g).zip(out.iter()) {
                        *s += g * y * (1.0 - y);
                    }
                });
            }
            Op::Dropout { src, keep } => {
                send(*src, &mut |s| {
                    for ((s, g), k) in s.iter_mut().zip(g).zip(keep) {
                        *s += g * k;
                    }
                });
            }
            Op::Softmax { src, mask } => {
                let n = self.dims(Var(id)).1;
                let y = &node.value;
                send(*src, &mut |s| {
                    for i in 0..s.len() / n {
                        let r = i * n..(i + 1) * n;
                        let dot: f64 = y[r.clone()].iter().zip(&g[r.clone()]).map(|(a, b)| a * b).sum();
                        for j in r {
                            if mask[j] {
                                s[j] += y[j] * (g[j] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { src, inv_std } => {
                let n = self.dims(Var(id)).1;
                let xhat = &node.value;
                send(*src, &mut |s| {
                    for (i, is) in inv_std.iter().enumerate() {
                        let r = i * n..(i + 1) * n;
                        let gm = g[r.clone()].iter().sum::<f64>() / n as f64;
                        let gxm = g[r.clone()].iter().zip(&xhat[r.clone()]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in r {
                            s[j] += is * (g[j] - gm - xhat[j] * gxm);
                        }
                    }
                });
            }
            Op::Bce { logits, targets, mask } => {
                let lv = self.value(*logits);
                let up = g[0];
                send(*logits, &mut |s| {
                    for i in 0..s.len() {
                        if mask[i] {
                            s[i] += up * (sigmoid(lv[i]) - targets[i]);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let up = g[0];
                send(*a, &mut |s| {
                    for s in s.iter_mut() {
                        *s += up;
                    }
                });
            }
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MatMulT(..) => "matmul_t",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::MulRow(..) => "mul_row",
        Op::ScaleRows(..) => "scale_rows",
        Op::Scale(..) => "scale",
        Op::ConcatCols(..) => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::GatherRows { .. } => "gather_rows",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Dropout { .. } => "dropout",
        Op::Softmax { .. } => "softmax_masked",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Bce { .. } => "bce_with_logits",
        Op::Sum(..) => "sum",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_forced_arithmetic() {
        let mut tape = Tape::new();
        let i2 = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = tape.matmul(i2, b).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 0.0]));
        let v = tape.leaf(t(&[2, 1], &[5.0, 7.0]));
        let c = tape.matmul(a, v).unwrap();
        assert_eq!(tape.value(c), &[5.0, 0.0]);
        assert_eq!(tape.shape(c), &[2, 1]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 3], &[0.0; 6]));
        let b = tape.leaf(t(&[2, 2], &[0.0; 4]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
        assert!(matches!(tape.add(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_gradient_of_sum() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]).requiring_grad());
        let b = tape.leaf(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &[3.0, 4.0]);
        assert!(g.get(b).is_none());
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[0.0, 0.0]));
        let y = tape.softmax_masked(x, &[true, true]).unwrap();
        assert_eq!(tape.value(y), &[0.5, 0.5]);

        let x = tape.leaf(t(&[2], &[5.0, 1e300]));
        let y = tape.softmax_masked(x, &[true, false]).unwrap();
        assert_eq!(tape.value(y), &[1.0, 0.0]);

        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let y = tape.softmax_masked(x, &[true; 3]).unwrap();
        // exp(k) / (e + e^2 + e^3), evaluated independently.
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        let expect = [1f64.exp() / z, 2f64.exp() / z, 3f64.exp() / z];
        for (a, b) in tape.value(y).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((expect[0] - 0.09003).abs() < 5e-6);
        assert!((expect[1] - 0.24473).abs() < 5e-6);
        assert!((expect[2] - 0.66524).abs() < 5e-6);

        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.softmax_masked(x, &[false, false]), Err(Error::EmptyContext)));
        let z = tape.softmax_masked_or_zero(x, &[false, false]).unwrap();
        assert_eq!(tape.value(z), &[0.0, 0.0]);
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[0.0]));
        let s = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(s), &[0.5]);
        let x = tape.leaf(t(&[2], &[-1.0, 2.0]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r), &[0.0, 2.0]);

        let mut rng = SeededRng::new(1);
        let d = tape.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(d, x);
        let d = tape.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(d, x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1000], &[1.0; 1000]));
        let mut rng = SeededRng::new(9);
        let d = tape.dropout(x, 0.3, true, &mut rng).unwrap();
        let v = tape.value(d);
        assert!(v.iter().all(|&e| e == 0.0 || (e - 1.0 / 0.7).abs() < 1e-15));
        let dropped = v.iter().filter(|&&e| e == 0.0).count();
        assert!((200..400).contains(&dropped), "{dropped}");
    }

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[0.0]));
        let l = tape.bce_with_logits(x, &[1.0], &[true]).unwrap();
        assert!((tape.value(l)[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let x = tape.leaf(t(&[1], &[30.0]));
        let l = tape.bce_with_logits(x, &[1.0], &[true]).unwrap();
        let v = tape.value(l)[0];
        assert!(v.is_finite() && (0.0..1e-12).contains(&v));

        let x = tape.leaf(t(&[2], &[0.0, 0.0]));
        let l = tape.bce_with_logits(x, &[1.0, 0.0], &[true, false]).unwrap();
        assert!((tape.value(l)[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let x = tape.leaf(t(&[2], &[1e3, -1e3]));
        let l = tape.bce_with_logits(x, &[0.0, 1.0], &[true, true]).unwrap();
        assert!((tape.value(l)[0] - 2e3).abs() < 1e-9);
        assert!(tape.bce_with_logits(x, &[0.5, 1.0], &[true, true]).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]).requiring_grad());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));

        let mut tape = Tape::new();
        let w = tape.leaf(t(&[1, 1], &[0.0]).requiring_grad());
        let x = tape.leaf(t(&[1, 1], &[1.0]));
        let wx = tape.matmul(w, x).unwrap();
        let s = tape.sigmoid(wx).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &[0.25]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut param = t(&[2], &[0.3, -0.7]).requiring_grad();
        let snapshot = param.clone();
        let mut tape = Tape::new();
        let p = tape.param(&snapshot);
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        g1.accumulate_into(p, &mut param).unwrap();
        let once = param.grad().unwrap().to_vec();
        g2.accumulate_into(p, &mut param).unwrap();
        let twice = param.grad().unwrap().to_vec();
        assert_eq!(once, vec![0.6, -1.4]);
        assert_eq!(twice, vec![1.2, -2.8]);
        param.zero_grad();
        g1.accumulate_into(p, &mut param).unwrap();
        assert_eq!(param.grad().unwrap(), once.as_slice());
    }
}

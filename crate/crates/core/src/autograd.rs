//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records operations on [`Var`] handles while borrowing the
//! model's [`ParamStore`]. Calling [`Graph::backward`] on a scalar node
//! returns the gradient of every parameter that took part in the
//! computation. Every value is a 2-D matrix; vectors are `1 × n` rows.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, Axis};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    /// Whether decoupled weight decay applies (off for biases and norms).
    pub decay: bool,
}

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix, decay: bool) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "parameter {name} registered twice");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value, decay });
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Per-parameter gradients produced by [`Graph::backward`]. Parameters that
/// did not influence the output have no entry.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`, the layout of PyTorch linear weights.
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Array1<f64>,
    },
    Gather(Var, Vec<usize>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        self.push(out, Op::MatMulT(a, b))
    }

    /// `x · Wᵀ + b` with `W` stored as `out × in` and `b` as `1 × out`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let h = self.matmul_t(x, weight);
        self.add_row(h, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add: shape mismatch");
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row: bias must be a single row");
        let out = self.value(a) + r;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul: shape mismatch");
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).mapv(|v| scale * v + shift);
        self.push(out, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(gelu);
        self.push(out, Op::Gelu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Array1::zeros(xv.nrows());
        for (mut row, istd) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            *istd = 1.0 / (var + eps).sqrt();
            let s = *istd;
            row.mapv_inplace(|v| (v - mean) * s);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros((ids.len(), t.ncols()));
        for (mut row, &id) in out.rows_mut().into_iter().zip(ids) {
            row.assign(&t.row(id));
        }
        self.push(out, Op::Gather(table, ids.to_vec()))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(out, Op::SliceRows(x, start))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(out, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Mean softmax cross-entropy of `logits` (N × C) against class indices,
    /// as a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len(), "cross_entropy: one target per row");
        assert!(!targets.is_empty(), "cross_entropy: empty batch");
        let probs = softmax_rows(lv);
        let mut total = 0.0;
        for (row, (&t, lrow)) in targets.iter().zip(lv.rows()).enumerate() {
            let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lrow.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - lv[(row, t)];
        }
        let out = Matrix::from_elem((1, 1), total / targets.len() as f64);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar: node is not 1 × 1");
        m[(0, 0)]
    }

    /// Gradients of `root` (seeded with ones) with respect to every parameter.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut bufs = GradBufs {
            nodes: (0..=root.0).map(|_| None).collect(),
            params: (0..self.params.len()).map(|_| None).collect(),
            ops: &self.nodes,
            store: self.params,
        };
        let seed = Matrix::ones(self.value(root).dim());
        bufs.add(root, seed);

        for i in (0..=root.0).rev() {
            let Some(g) = bufs.nodes[i].take() else {
                continue;
            };
            let y = self.nodes[i].value.as_ref();
            match &self.nodes[i].op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    bufs.add(*a, da);
                    bufs.add(*b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    bufs.add(*a, da);
                    bufs.add(*b, db);
                }
                Op::Add(a, b) => {
                    bufs.add(*b, g.clone());
                    bufs.add(*a, g);
                }
                Op::AddRow(a, row) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    bufs.add(*row, dr);
                    bufs.add(*a, g);
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    bufs.add(*a, da);
                    bufs.add(*b, db);
                }
                Op::Affine(x, scale) => {
                    bufs.add(*x, g * *scale);
                }
                Op::Sigmoid(x) => {
                    let y = y.unwrap();
                    let mut d = g;
                    ndarray::Zip::from(&mut d).and(y).for_each(|d, &y| *d *= y * (1.0 - y));
                    bufs.add(*x, d);
                }
                Op::Tanh(x) => {
                    let y = y.unwrap();
                    let mut d = g;
                    ndarray::Zip::from(&mut d).and(y).for_each(|d, &y| *d *= 1.0 - y * y);
                    bufs.add(*x, d);
                }
                Op::Gelu(x) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(self.value(*x))
                        .for_each(|d, &x| *d *= gelu_grad(x));
                    bufs.add(*x, d);
                }
                Op::SoftmaxRows(x) => {
                    let y = y.unwrap();
                    let mut d = g;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = drow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                        ndarray::Zip::from(&mut drow)
                            .and(&yrow)
                            .for_each(|d, &y| *d = y * (*d - dot));
                    }
                    bufs.add(*x, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gam = self.value(*gamma);
                    bufs.add(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    bufs.add(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let n = xhat.ncols() as f64;
                    let mut dx = &g * gam;
                    for ((mut row, xh), &istd) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std.iter()) {
                        let sum_d: f64 = row.sum();
                        let sum_dx: f64 = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
                        ndarray::Zip::from(&mut row).and(&xh).for_each(|d, &xh| {
                            *d = istd / n * (n * *d - sum_d - xh * sum_dx);
                        });
                    }
                    bufs.add(*x, dx);
                }
                Op::Gather(table, ids) => {
                    let buf = bufs.buffer(*table);
                    for (row, &id) in g.rows().into_iter().zip(ids) {
                        let mut target = buf.row_mut(id);
                        target += &row;
                    }
                }
                Op::SliceRows(x, start) => {
                    let buf = bufs.buffer(*x);
                    let mut view = buf.slice_mut(s![*start..*start + g.nrows(), ..]);
                    view += &g;
                }
                Op::SliceCols(x, start) => {
                    let buf = bufs.buffer(*x);
                    let mut view = buf.slice_mut(s![.., *start..*start + g.ncols()]);
                    view += &g;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        bufs.add(*p, g.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        bufs.add(*p, g.slice(s![offset..offset + h, ..]).to_owned());
                        offset += h;
                    }
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g[(0, 0)] / targets.len() as f64;
                    let mut d = probs.clone();
                    for (row, &t) in targets.iter().enumerate() {
                        d[(row, t)] -= 1.0;
                    }
                    d *= scale;
                    bufs.add(*logits, d);
                }
            }
        }
        Gradients { grads: bufs.params }
    }
}

struct GradBufs<'a> {
    nodes: Vec<Option<Matrix>>,
    params: Vec<Option<Matrix>>,
    ops: &'a [Node],
    store: &'a ParamStore,
}

impl GradBufs<'_> {
    /// Gradient accumulator for `v`. Parameter nodes accumulate straight
    /// into the per-parameter buffer.
    fn buffer(&mut self, v: Var) -> &mut Matrix {
        if let Op::Param(id) = self.ops[v.0].op {
            let dim = self.store.get(id).dim();
            self.params[id.0].get_or_insert_with(|| Matrix::zeros(dim))
        } else {
            let dim = self.ops[v.0].value.as_ref().unwrap().dim();
            self.nodes[v.0].get_or_insert_with(|| Matrix::zeros(dim))
        }
    }

    fn add(&mut self, v: Var, g: Matrix) {
        let slot = if let Op::Param(id) = self.ops[v.0].op {
            &mut self.params[id.0]
        } else {
            &mut self.nodes[v.0]
        };
        match slot {
            Some(existing) => *existing += &g,
            None => *slot = Some(g),
        }
    }
}

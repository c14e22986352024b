//! Tape of differentiable operations.
//!
//! Nodes are appended in evaluation order, so node ids are a topological
//! order by construction and `backward` simply walks the tape in reverse.
//! Parameters enter the tape as leaves holding a copy of the stored values;
//! their gradients are read back with [`Graph::param_grads`].

use std::collections::HashMap;

use super::tensor::{GradBuffer, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine {
        w: NodeId,
        x: NodeId,
        b: Option<NodeId>,
    },
    MatVecT {
        m: NodeId,
        x: NodeId,
    },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Lookup {
        table: NodeId,
        row: usize,
    },
    Inner(NodeId, NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Log(NodeId),
    NllPick {
        x: NodeId,
        index: usize,
    },
    Slice {
        x: NodeId,
        start: usize,
    },
    Sum(Vec<NodeId>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, NodeId>,
    param_order: Vec<(ParamId, NodeId)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

fn log_softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { op, shape, value });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// A constant leaf.
    pub fn input(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<NodeId> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape {
                op: "input",
                left: shape,
                right: vec![values.len()],
            });
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Shape {
                op: "input",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(self.push(Op::Leaf, shape, values))
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Result<NodeId> {
        let n = values.len();
        self.input(vec![n], values)
    }

    pub fn zeros(&mut self, n: usize) -> Result<NodeId> {
        self.vector(vec![0.0; n])
    }

    /// Leaf mirroring a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let t = store.get(id);
        let node = self.push(Op::Leaf, t.shape().to_vec(), t.values().to_vec());
        self.params.insert(id, node);
        self.param_order.push((id, node));
        node
    }

    fn rank1(&self, op: &'static str, id: NodeId) -> Result<usize> {
        let s = self.shape(id);
        if s.len() == 1 {
            Ok(s[0])
        } else {
            Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![],
            })
        }
    }

    fn rank2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        let s = self.shape(id);
        if s.len() == 2 {
            Ok((s[0], s[1]))
        } else {
            Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![],
            })
        }
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            })
        }
    }

    /// `w · x + b` with `w: [rows, cols]`, `x: [cols]`, `b: [rows]`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (rows, cols) = self.rank2("affine", w)?;
        let n = self.rank1("affine", x)?;
        if n != cols {
            return Err(Error::Shape {
                op: "affine",
                left: self.shape(w).to_vec(),
                right: self.shape(x).to_vec(),
            });
        }
        if let Some(b) = b {
            if self.shape(b) != [rows] {
                return Err(Error::Shape {
                    op: "affine",
                    left: vec![rows],
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let wv = &self.node(w).value;
        let xv = &self.node(x).value;
        let mut out: Vec<f64> = wv.chunks_exact(cols).map(|row| dot(row, xv)).collect();
        if let Some(b) = b {
            for (o, bi) in out.iter_mut().zip(&self.node(b).value) {
                *o += bi;
            }
        }
        Ok(self.push(Op::Affine { w, x, b }, vec![rows], out))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        self.affine(w, x, None)
    }

    /// `mᵀ · x` with `m: [rows, cols]`, `x: [rows]`.
    pub fn matvec_t(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.rank2("matvec_t", m)?;
        let n = self.rank1("matvec_t", x)?;
        if n != rows {
            return Err(Error::Shape {
                op: "matvec_t",
                left: self.shape(m).to_vec(),
                right: self.shape(x).to_vec(),
            });
        }
        let mv = &self.node(m).value;
        let xv = &self.node(x).value;
        let mut out = vec![0.0; cols];
        for (row, &xi) in mv.chunks_exact(cols).zip(xv) {
            axpy(xi, row, &mut out);
        }
        Ok(self.push(Op::MatVecT { m, x }, vec![cols], out))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let n = self.node(a);
        let (shape, value) = (n.shape.clone(), n.value.iter().map(|v| v.tanh()).collect());
        self.push(Op::Tanh(a), shape, value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let n = self.node(a);
        let (shape, value) = (n.shape.clone(), n.value.iter().map(|&v| sigmoid(v)).collect());
        self.push(Op::Sigmoid(a), shape, value)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let n = self.node(a);
        let (shape, value) = (n.shape.clone(), n.value.iter().map(|v| v.ln()).collect());
        self.push(Op::Log(a), shape, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Add(a, b), shape, value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Mul(a, b), shape, value))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat"));
        }
        let mut value = Vec::new();
        for &p in parts {
            self.rank1("concat", p)?;
            value.extend_from_slice(self.value(p));
        }
        let n = value.len();
        Ok(self.push(Op::Concat(parts.to_vec()), vec![n], value))
    }

    /// Stacks equally sized vectors into a `[count, dim]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = *rows.first().ok_or(Error::EmptyInput("stack_rows"))?;
        let dim = self.rank1("stack_rows", first)?;
        let mut value = Vec::with_capacity(dim * rows.len());
        for &r in rows {
            if self.shape(r) != [dim] {
                return Err(Error::Shape {
                    op: "stack_rows",
                    left: vec![dim],
                    right: self.shape(r).to_vec(),
                });
            }
            value.extend_from_slice(self.value(r));
        }
        Ok(self.push(Op::StackRows(rows.to_vec()), vec![rows.len(), dim], value))
    }

    pub fn lookup(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let (rows, cols) = self.rank2("lookup", table)?;
        if row >= rows {
            return Err(Error::OutOfRange {
                what: "embedding row",
                id: row,
                limit: rows,
            });
        }
        let value = self.value(table)[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Op::Lookup { table, row }, vec![cols], value))
    }

    pub fn inner(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.rank1("inner", a)?;
        self.same_shape("inner", a, b)?;
        let v = dot(self.value(a), self.value(b));
        Ok(self.push(Op::Inner(a, b), vec![1], vec![v]))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.rank1("softmax", a)?;
        let value = softmax_values(self.value(a));
        Ok(self.push(Op::Softmax(a), vec![n], value))
    }

    /// Numerically stable `log(softmax(a))`.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.rank1("log_softmax", a)?;
        let value = log_softmax_values(self.value(a));
        Ok(self.push(Op::LogSoftmax(a), vec![n], value))
    }

    /// `-a[index]`: the negative log-likelihood of `index` given log-probabilities `a`.
    pub fn nll_pick(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let n = self.rank1("nll_pick", a)?;
        if index >= n {
            return Err(Error::OutOfRange {
                what: "nll_pick index",
                id: index,
                limit: n,
            });
        }
        let v = -self.value(a)[index];
        Ok(self.push(Op::NllPick { x: a, index }, vec![1], vec![v]))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.rank1("slice", a)?;
        if len == 0 || start + len > n {
            return Err(Error::Shape {
                op: "slice",
                left: vec![n],
                right: vec![start, len],
            });
        }
        let value = self.value(a)[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x: a, start }, vec![len], value))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or(Error::EmptyInput("sum"))?;
        let mut value = self.value(first).to_vec();
        for &p in &parts[1..] {
            self.same_shape("sum", first, p)?;
            for (v, x) in value.iter_mut().zip(self.value(p)) {
                *v += x;
            }
        }
        let shape = self.shape(first).to_vec();
        Ok(self.push(Op::Sum(parts.to_vec()), shape, value))
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients from earlier calls
    /// are discarded.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.shape(loss) != [1] {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], id: NodeId, n: usize) -> &'a mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; n])
        }

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let len_of = |id: NodeId| self.nodes[id.0].value.len();
            let val = |id: NodeId| self.nodes[id.0].value.as_slice();
            match &node.op {
                Op::Leaf => {}
                Op::Affine { w, x, b } => {
                    let cols = self.nodes[w.0].shape[1];
                    let wv = val(*w);
                    let xv = val(*x);
                    {
                        let gw = slot(&mut grads, *w, wv.len());
                        for (row, &g) in gw.chunks_exact_mut(cols).zip(&gy) {
                            if g != 0.0 {
                                axpy(g, xv, row);
                            }
                        }
                    }
                    {
                        let gx = slot(&mut grads, *x, cols);
                        for (row, &g) in wv.chunks_exact(cols).zip(&gy) {
                            if g != 0.0 {
                                axpy(g, row, gx);
                            }
                        }
                    }
                    if let Some(b) = b {
                        axpy(1.0, &gy, slot(&mut grads, *b, gy.len()));
                    }
                }
                Op::MatVecT { m, x } => {
                    let cols = self.nodes[m.0].shape[1];
                    let mv = val(*m);
                    let xv = val(*x);
                    {
                        let gm = slot(&mut grads, *m, mv.len());
                        for (row, &xi) in gm.chunks_exact_mut(cols).zip(xv) {
                            axpy(xi, &gy, row);
                        }
                    }
                    let gx = slot(&mut grads, *x, xv.len());
                    for (g, row) in gx.iter_mut().zip(mv.chunks_exact(cols)) {
                        *g += dot(row, &gy);
                    }
                }
                Op::Tanh(a) => {
                    let g = slot(&mut grads, *a, gy.len());
                    for ((gi, &y), &d) in g.iter_mut().zip(&node.value).zip(&gy) {
                        *gi += d * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let g = slot(&mut grads, *a, gy.len());
                    for ((gi, &y), &d) in g.iter_mut().zip(&node.value).zip(&gy) {
                        *gi += d * y * (1.0 - y);
                    }
                }
                Op::Log(a) => {
                    let av = val(*a);
                    let g = slot(&mut grads, *a, gy.len());
                    for ((gi, &x), &d) in g.iter_mut().zip(av).zip(&gy) {
                        *gi += d / x;
                    }
                }
                Op::Add(a, b) => {
                    axpy(1.0, &gy, slot(&mut grads, *a, gy.len()));
                    axpy(1.0, &gy, slot(&mut grads, *b, gy.len()));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    {
                        let ga = slot(&mut grads, *a, gy.len());
                        for ((g, &y), &d) in ga.iter_mut().zip(bv).zip(&gy) {
                            *g += d * y;
                        }
                    }
                    let gb = slot(&mut grads, *b, gy.len());
                    for ((g, &x), &d) in gb.iter_mut().zip(av).zip(&gy) {
                        *g += d * x;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = len_of(p);
                        axpy(1.0, &gy[offset..offset + n], slot(&mut grads, p, n));
                        offset += n;
                    }
                }
                Op::StackRows(rows) => {
                    let dim = node.shape[1];
                    for (&r, chunk) in rows.iter().zip(gy.chunks_exact(dim)) {
                        axpy(1.0, chunk, slot(&mut grads, r, dim));
                    }
                }
                Op::Lookup { table, row } => {
                    let n = len_of(*table);
                    let dim = gy.len();
                    let g = slot(&mut grads, *table, n);
                    axpy(1.0, &gy, &mut g[row * dim..(row + 1) * dim]);
                }
                Op::Inner(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let d = gy[0];
                    axpy(d, bv, slot(&mut grads, *a, av.len()));
                    axpy(d, av, slot(&mut grads, *b, bv.len()));
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let s = dot(&gy, y);
                    let g = slot(&mut grads, *a, y.len());
                    for ((gi, &yi), &d) in g.iter_mut().zip(y).zip(&gy) {
                        *gi += yi * (d - s);
                    }
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let s: f64 = gy.iter().sum();
                    let g = slot(&mut grads, *a, y.len());
                    for ((gi, &yi), &d) in g.iter_mut().zip(y).zip(&gy) {
                        *gi += d - yi.exp() * s;
                    }
                }
                Op::NllPick { x, index } => {
                    let n = len_of(*x);
                    slot(&mut grads, *x, n)[*index] -= gy[0];
                }
                Op::Slice { x, start } => {
                    let n = len_of(*x);
                    let g = slot(&mut grads, *x, n);
                    axpy(1.0, &gy, &mut g[*start..*start + gy.len()]);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        axpy(1.0, &gy, slot(&mut grads, p, gy.len()));
                    }
                }
            }
            grads[i] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradients of every parameter leaf reached by the last `backward`.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> + '_ {
        self.param_order
            .iter()
            .filter_map(|&(pid, node)| self.grad(node).map(|g| (pid, g)))
    }

    pub fn accumulate_into(&self, buffer: &mut GradBuffer) {
        for (pid, g) in self.param_grads() {
            buffer.add(pid, g);
        }
    }
}

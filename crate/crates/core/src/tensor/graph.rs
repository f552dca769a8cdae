//! Reverse-mode differentiation over a static graph of dense arrays.
//!
//! Nodes are appended in construction order, so every node's inputs have a
//! smaller index than the node itself. Index order is therefore a topological
//! order, and the backward sweep simply walks the indices downwards.
//!
//! Broadcasting is deliberately absent: apart from multiplication by a
//! constant scalar (`scale`) and the explicit per-row bias `add_row`, every
//! binary op requires identical shapes.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::{DenseArray, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction extent. `Rows` reduces the last axis: `[n, m] -> [n]`, `[m] -> []`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    All,
    Rows,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nonlinearity {
    Tanh,
    Exp,
    Log,
}

#[derive(Clone, Debug)]
pub enum Op<T> {
    Leaf(String),
    Constant(DenseArray<T>),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, T),
    /// Matrix `[n, m]` plus a vector `[m]` added to every row.
    AddRow(NodeId, NodeId),
    /// Row lookup into a `[r, c]` table; yields `[ids.len(), c]`.
    EmbedLookup {
        table: NodeId,
        ids: Vec<usize>,
    },
    Elementwise(NodeId, Nonlinearity),
    Square(NodeId),
    ReduceMean(NodeId, Axis),
    ReduceSum(NodeId, Axis),
    /// Ties resolve to the lowest index among the maximizers.
    ReduceMax(NodeId, Axis),
    /// Picks `input[i, cols[i]]` for every row `i`; yields `[n]`.
    Gather {
        input: NodeId,
        cols: Vec<usize>,
    },
    /// Concatenation along the first axis.
    Concat(Vec<NodeId>),
    /// Numerically stable per-row log-sum-exp.
    LogSumExp(NodeId),
    /// Row-wise softmax over a square matrix with entries above the
    /// diagonal masked out.
    CausalSoftmax(NodeId),
}

impl<T> Op<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Constant(_) => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add-row",
            Op::EmbedLookup { .. } => "embed-lookup",
            Op::Elementwise(..) => "elementwise-nonlinearity",
            Op::Square(_) => "square",
            Op::ReduceMean(..) => "reduce-mean",
            Op::ReduceSum(..) => "reduce-sum",
            Op::ReduceMax(..) => "reduce-max",
            Op::Gather { .. } => "gather",
            Op::Concat(_) => "concat",
            Op::LogSumExp(_) => "log-sum-exp",
            Op::CausalSoftmax(_) => "causal-softmax",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf(_) | Op::Constant(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Elementwise(a, _)
            | Op::Square(a)
            | Op::ReduceMean(a, _)
            | Op::ReduceSum(a, _)
            | Op::ReduceMax(a, _)
            | Op::LogSumExp(a)
            | Op::CausalSoftmax(a) => vec![*a],
            Op::EmbedLookup { table, .. } => vec![*table],
            Op::Gather { input, .. } => vec![*input],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

/// Source of leaf values for a forward pass.
pub trait Bindings<T> {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>>;
}

impl<T> Bindings<T> for HashMap<String, DenseArray<T>> {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>> {
        self.get(name)
    }
}

impl<T> Bindings<T> for BTreeMap<String, DenseArray<T>> {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>> {
        self.get(name)
    }
}

impl<T> Bindings<T> for [(&str, DenseArray<T>)] {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>> {
        self.iter().find(|(n, _)| *n == name).map(|(_, a)| a)
    }
}

impl<T, const N: usize> Bindings<T> for [(&str, DenseArray<T>); N] {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>> {
        self.as_slice().lookup(name)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Op<T>>,
    values: Vec<Option<DenseArray<T>>>,
    leaves: HashMap<String, NodeId>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            values: Vec::new(),
            leaves: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op<T> {
        &self.nodes[id.0]
    }

    fn push(&mut self, op: Op<T>) -> NodeId {
        self.nodes.push(op);
        self.values.push(None);
        NodeId(self.nodes.len() - 1)
    }

    /// Named input. Requesting the same name twice returns the same node.
    pub fn leaf(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push(Op::Leaf(name.to_string()));
        self.leaves.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, value: DenseArray<T>) -> NodeId {
        self.push(Op::Constant(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddRow(a, bias))
    }

    pub fn embed(&mut self, table: NodeId, ids: Vec<usize>) -> NodeId {
        self.push(Op::EmbedLookup { table, ids })
    }

    pub fn unary(&mut self, a: NodeId, f: Nonlinearity) -> NodeId {
        self.push(Op::Elementwise(a, f))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Nonlinearity::Tanh)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Square(a))
    }

    pub fn mean(&mut self, a: NodeId, axis: Axis) -> NodeId {
        self.push(Op::ReduceMean(a, axis))
    }

    pub fn sum(&mut self, a: NodeId, axis: Axis) -> NodeId {
        self.push(Op::ReduceSum(a, axis))
    }

    pub fn max(&mut self, a: NodeId, axis: Axis) -> NodeId {
        self.push(Op::ReduceMax(a, axis))
    }

    pub fn gather(&mut self, input: NodeId, cols: Vec<usize>) -> NodeId {
        self.push(Op::Gather { input, cols })
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        self.push(Op::Concat(parts))
    }

    pub fn logsumexp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::LogSumExp(a))
    }

    pub fn causal_softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::CausalSoftmax(a))
    }

    /// Cached value of a node from the most recent forward pass.
    pub fn value(&self, id: NodeId) -> Option<&DenseArray<T>> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    /// Evaluates every ancestor of `root` and returns the root value.
    ///
    /// Leaves that are not ancestors of `root` are still bound when a value
    /// is available so that `backward` can report zero gradients for them.
    pub fn forward<B: Bindings<T> + ?Sized>(
        &mut self,
        bindings: &B,
        root: NodeId,
    ) -> Result<DenseArray<T>> {
        let mut needed = vec![false; root.0 + 1];
        needed[root.0] = true;
        for i in (0..=root.0).rev() {
            if needed[i] {
                for input in self.nodes[i].inputs() {
                    needed[input.0] = true;
                }
            }
        }

        for slot in &mut self.values {
            *slot = None;
        }
        for i in 0..=root.0 {
            let op = &self.nodes[i];
            if !needed[i] {
                if let Op::Leaf(name) = op {
                    self.values[i] = bindings.lookup(name).cloned();
                }
                continue;
            }
            let value = match op {
                Op::Leaf(name) => bindings
                    .lookup(name)
                    .cloned()
                    .ok_or_else(|| Error::UnboundLeaf(name.clone()))?,
                _ => self.eval_node(i)?,
            };
            if !value.all_finite() {
                return Err(Error::NonFiniteNode {
                    node: i,
                    op: self.nodes[i].kind(),
                });
            }
            self.values[i] = Some(value);
        }
        Ok(self.values[root.0].clone().expect("root evaluated"))
    }

    fn input_value(&self, id: NodeId) -> &DenseArray<T> {
        self.values[id.0].as_ref().expect("inputs evaluated first")
    }

    fn shape_err(&self, node: usize, detail: String) -> Error {
        Error::Shape {
            node,
            op: self.nodes[node].kind(),
            detail,
        }
    }

    fn eval_node(&self, i: usize) -> Result<DenseArray<T>> {
        let op = &self.nodes[i];
        match op {
            Op::Leaf(_) => unreachable!("leaves are bound directly"),
            Op::Constant(v) => Ok(v.clone()),
            Op::MatMul(a, b) => {
                let (a, b) = (self.input_value(*a), self.input_value(*b));
                let (m, k, n) = match (a.shape(), b.shape()) {
                    ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
                    (sa, sb) => {
                        return Err(self.shape_err(i, format!("cannot multiply {sa:?} by {sb:?}")))
                    }
                };
                DenseArray::matrix(m, n, matmul(a.data(), b.data(), m, k, n))
            }
            Op::Transpose(a) => {
                let a = self.input_value(*a);
                let (r, c) = self.require_matrix(i, a)?;
                DenseArray::matrix(c, r, transpose(a.data(), r, c))
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let (a, b) = (self.input_value(*a), self.input_value(*b));
                if a.shape() != b.shape() {
                    return Err(self.shape_err(
                        i,
                        format!("operands {:?} and {:?} differ", a.shape(), b.shape()),
                    ));
                }
                let sign = if matches!(op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                let data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| x + sign * y)
                    .collect();
                DenseArray::new(a.shape().to_vec(), data)
            }
            Op::Scale(a, c) => Ok(self.input_value(*a).map(|v| v * *c)),
            Op::AddRow(a, b) => {
                let (a, b) = (self.input_value(*a), self.input_value(*b));
                let (_, c) = self.require_matrix(i, a)?;
                if b.shape() != [c] {
                    return Err(self.shape_err(
                        i,
                        format!("bias {:?} does not match {:?}", b.shape(), a.shape()),
                    ));
                }
                let mut out = a.clone();
                for (k, v) in out.data_mut().iter_mut().enumerate() {
                    *v = *v + b.data()[k % c];
                }
                Ok(out)
            }
            Op::EmbedLookup { table, ids } => {
                let t = self.input_value(*table);
                let (rows, cols) = self.require_matrix(i, t)?;
                if ids.is_empty() {
                    return Err(self.shape_err(i, "empty id list".into()));
                }
                let mut data = Vec::with_capacity(ids.len() * cols);
                for &id in ids {
                    if id >= rows {
                        return Err(
                            self.shape_err(i, format!("id {id} out of range for {rows} rows"))
                        );
                    }
                    data.extend_from_slice(t.row(id));
                }
                DenseArray::matrix(ids.len(), cols, data)
            }
            Op::Elementwise(a, f) => {
                let a = self.input_value(*a);
                Ok(match f {
                    Nonlinearity::Tanh => a.map(T::tanh),
                    Nonlinearity::Exp => a.map(T::exp),
                    Nonlinearity::Log => a.map(T::ln),
                })
            }
            Op::Square(a) => Ok(self.input_value(*a).map(|v| v * v)),
            Op::ReduceMean(a, axis) | Op::ReduceSum(a, axis) => {
                let a = self.input_value(*a);
                let mean = matches!(op, Op::ReduceMean(..));
                let (out_shape, groups, width) = self.reduction_layout(i, a, *axis)?;
                let denom = if mean { T::lit(width as f64) } else { T::one() };
                let data = (0..groups)
                    .map(|g| {
                        let s: T = a.data()[g * width..(g + 1) * width].iter().copied().sum();
                        s / denom
                    })
                    .collect();
                DenseArray::new(out_shape, data)
            }
            Op::ReduceMax(a, axis) => {
                let a = self.input_value(*a);
                let (out_shape, groups, width) = self.reduction_layout(i, a, *axis)?;
                let data = (0..groups)
                    .map(|g| {
                        let seg = &a.data()[g * width..(g + 1) * width];
                        seg[argmax(seg)]
                    })
                    .collect();
                DenseArray::new(out_shape, data)
            }
            Op::Gather { input, cols } => {
                let a = self.input_value(*input);
                let (r, c) = self.require_matrix(i, a)?;
                if cols.len() != r {
                    return Err(self.shape_err(i, format!("{} indices for {r} rows", cols.len())));
                }
                let mut data = Vec::with_capacity(r);
                for (row, &col) in cols.iter().enumerate() {
                    if col >= c {
                        return Err(self.shape_err(i, format!("column {col} out of range {c}")));
                    }
                    data.push(a.at(row, col));
                }
                DenseArray::vector(data)
            }
            Op::Concat(parts) => {
                if parts.is_empty() {
                    return Err(self.shape_err(i, "nothing to concatenate".into()));
                }
                let first = self.input_value(parts[0]);
                let tail = first.shape()[1..].to_vec();
                if first.ndim() == 0 {
                    return Err(self.shape_err(i, "cannot concatenate scalars".into()));
                }
                let mut lead = 0;
                let mut data = Vec::new();
                for p in parts {
                    let v = self.input_value(*p);
                    if v.ndim() != first.ndim() || v.shape()[1..] != tail[..] {
                        return Err(self.shape_err(
                            i,
                            format!("part {:?} incompatible with {:?}", v.shape(), first.shape()),
                        ));
                    }
                    lead += v.shape()[0];
                    data.extend_from_slice(v.data());
                }
                let mut shape = vec![lead];
                shape.extend(tail);
                DenseArray::new(shape, data)
            }
            Op::LogSumExp(a) => {
                let a = self.input_value(*a);
                let (out_shape, groups, width) = self.reduction_layout(i, a, Axis::Rows)?;
                let data = (0..groups)
                    .map(|g| log_sum_exp(&a.data()[g * width..(g + 1) * width]))
                    .collect();
                DenseArray::new(out_shape, data)
            }
            Op::CausalSoftmax(a) => {
                let a = self.input_value(*a);
                let (r, c) = self.require_matrix(i, a)?;
                if r != c {
                    return Err(self.shape_err(i, format!("needs a square matrix, got {r}x{c}")));
                }
                let mut out = vec![T::zero(); r * c];
                for row in 0..r {
                    let seg = &a.data()[row * c..row * c + row + 1];
                    let m = seg[argmax(seg)];
                    let mut total = T::zero();
                    for (j, &v) in seg.iter().enumerate() {
                        let e = (v - m).exp();
                        out[row * c + j] = e;
                        total = total + e;
                    }
                    for v in &mut out[row * c..row * c + row + 1] {
                        *v = *v / total;
                    }
                }
                DenseArray::matrix(r, c, out)
            }
        }
    }

    fn require_matrix(&self, node: usize, a: &DenseArray<T>) -> Result<(usize, usize)> {
        match a.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(self.shape_err(node, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// (output shape, number of groups, group width)
    fn reduction_layout(
        &self,
        node: usize,
        a: &DenseArray<T>,
        axis: Axis,
    ) -> Result<(Vec<usize>, usize, usize)> {
        match axis {
            Axis::All => Ok((Vec::new(), 1, a.len())),
            Axis::Rows => match a.shape() {
                [m] => Ok((Vec::new(), 1, *m)),
                [n, m] => Ok((vec![*n], *n, *m)),
                s => Err(self.shape_err(node, format!("row reduction of {s:?}"))),
            },
        }
    }

    /// Gradients of the scalar `root` with respect to the named leaves.
    ///
    /// Leaves the root does not depend on receive zero arrays.
    pub fn backward(
        &self,
        root: NodeId,
        leaf_names: &[&str],
    ) -> Result<HashMap<String, DenseArray<T>>> {
        let root_value = self.values.get(root.0).and_then(Option::as_ref);
        let root_value = root_value.ok_or(Error::NotEvaluated)?;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }

        let mut grads: Vec<Option<DenseArray<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(DenseArray::filled(root_value.shape(), T::one()));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut out = HashMap::with_capacity(leaf_names.len());
        for &name in leaf_names {
            let id = *self
                .leaves
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no leaf named `{name}`")))?;
            let grad = match grads.get(id.0).and_then(Option::clone) {
                Some(g) => g,
                None => {
                    let v = self.value(id).ok_or(Error::NotEvaluated)?;
                    DenseArray::zeros(v.shape())
                }
            };
            out.insert(name.to_string(), grad);
        }
        Ok(out)
    }

    fn propagate(&self, i: usize, g: &DenseArray<T>, grads: &mut [Option<DenseArray<T>>]) {
        let out = self.values[i].as_ref().expect("evaluated");
        match &self.nodes[i] {
            Op::Leaf(_) | Op::Constant(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.input_value(*a), self.input_value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                let bt = transpose(bv.data(), k, n);
                let da = matmul(g.data(), &bt, m, n, k);
                let at = transpose(av.data(), m, k);
                let db = matmul(&at, g.data(), k, m, n);
                accumulate(grads, *a, av.shape(), da);
                accumulate(grads, *b, bv.shape(), db);
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let av = self.input_value(*a);
                accumulate(grads, *a, av.shape(), transpose(g.data(), r, c));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().iter().map(|&v| -v).collect());
            }
            Op::Scale(a, c) => {
                accumulate(
                    grads,
                    *a,
                    g.shape(),
                    g.data().iter().map(|&v| v * *c).collect(),
                );
            }
            Op::AddRow(a, b) => {
                let c = g.shape()[1];
                let mut db = vec![T::zero(); c];
                for (k, &v) in g.data().iter().enumerate() {
                    db[k % c] = db[k % c] + v;
                }
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, &[c], db);
            }
            Op::EmbedLookup { table, ids } => {
                let tv = self.input_value(*table);
                let cols = tv.shape()[1];
                let mut dt = vec![T::zero(); tv.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        dt[id * cols + c] = dt[id * cols + c] + g.data()[r * cols + c];
                    }
                }
                accumulate(grads, *table, tv.shape(), dt);
            }
            Op::Elementwise(a, f) => {
                let av = self.input_value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(av.data())
                    .map(|((&gv, &y), &x)| match f {
                        Nonlinearity::Tanh => gv * (T::one() - y * y),
                        Nonlinearity::Exp => gv * y,
                        Nonlinearity::Log => gv / x,
                    })
                    .collect();
                accumulate(grads, *a, av.shape(), d);
            }
            Op::Square(a) => {
                let av = self.input_value(*a);
                let two = T::lit(2.0);
                let d = g
                    .data()
                    .iter()
                    .zip(av.data())
                    .map(|(&gv, &x)| two * x * gv)
                    .collect();
                accumulate(grads, *a, av.shape(), d);
            }
            Op::ReduceMean(a, _) | Op::ReduceSum(a, _) => {
                let av = self.input_value(*a);
                let groups = g.len();
                let width = av.len() / groups;
                let scale = if matches!(self.nodes[i], Op::ReduceMean(..)) {
                    T::one() / T::lit(width as f64)
                } else {
                    T::one()
                };
                let d = (0..av.len()).map(|k| g.data()[k / width] * scale).collect();
                accumulate(grads, *a, av.shape(), d);
            }
            Op::ReduceMax(a, _) => {
                let av = self.input_value(*a);
                let groups = g.len();
                let width = av.len() / groups;
                let mut d = vec![T::zero(); av.len()];
                for grp in 0..groups {
                    let seg = &av.data()[grp * width..(grp + 1) * width];
                    d[grp * width + argmax(seg)] = g.data()[grp];
                }
                accumulate(grads, *a, av.shape(), d);
            }
            Op::Gather { input, cols } => {
                let av = self.input_value(*input);
                let c = av.shape()[1];
                let mut d = vec![T::zero(); av.len()];
                for (row, &col) in cols.iter().enumerate() {
                    d[row * c + col] = g.data()[row];
                }
                accumulate(grads, *input, av.shape(), d);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pv = self.input_value(*p);
                    let n = pv.len();
                    accumulate(grads, *p, pv.shape(), g.data()[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::LogSumExp(a) => {
                let av = self.input_value(*a);
                let groups = g.len();
                let width = av.len() / groups;
                let mut d = vec![T::zero(); av.len()];
                for grp in 0..groups {
                    let lse = out.data()[grp];
                    for k in grp * width..(grp + 1) * width {
                        d[k] = g.data()[grp] * (av.data()[k] - lse).exp();
                    }
                }
                accumulate(grads, *a, av.shape(), d);
            }
            Op::CausalSoftmax(a) => {
                let n = out.shape()[0];
                let mut d = vec![T::zero(); n * n];
                for r in 0..n {
                    let y = &out.data()[r * n..r * n + r + 1];
                    let gy = &g.data()[r * n..r * n + r + 1];
                    let dot: T = y.iter().zip(gy).map(|(&p, &q)| p * q).sum();
                    for j in 0..=r {
                        d[r * n + j] = y[j] * (gy[j] - dot);
                    }
                }
                accumulate(grads, *a, out.shape(), d);
            }
        }
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<DenseArray<T>>],
    id: NodeId,
    shape: &[usize],
    delta: Vec<T>,
) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta) {
                *e = *e + d;
            }
        }
        slot @ None => {
            *slot = Some(DenseArray::new(shape.to_vec(), delta).expect("gradient shape"));
        }
    }
}

/// Index of the first maximal entry.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let m = values[argmax(values)];
    let s: T = values.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

fn transpose<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

//! Reverse-mode tape.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its output value. Parameters are referenced from a borrowed
//! [`ParamStore`] instead of being copied, so recording a pass over a large
//! model costs only the activations. [`Tape::backward`] walks the nodes once
//! in reverse recording order and returns the gradients of every leaf and
//! parameter that requires them.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::tensor::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);
static EMPTY_STORE: ParamStore = ParamStore::new();

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// Derivative at exactly zero is taken to be zero.
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Deliberate corruption of one backward rule, used to prove that the
/// gradient checker actually catches broken derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Scales the sigmoid derivative by 1.1.
    SigmoidBackward,
}

enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape(Var),
    Slice { input: Var, start: usize },
    Add(Var, Var),
    Mul(Var, Var),
    Act(Activation, Var),
    Lookup { table: ParamId, row: usize },
    Sum(Var),
    Dot(Var, Var),
    SoftmaxCe { logits: Var, gold: usize, probs: Vec<f64> },
}

struct Node {
    shape: Vec<usize>,
    value: Value,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p> {
    id: usize,
    params: &'p ParamStore,
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

impl Default for Tape<'static> {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape<'static> {
    /// A tape with no parameter store; only leaves created with
    /// [`Tape::input`] and [`Tape::constant`] are available.
    pub fn new() -> Self {
        Tape::with_params(&EMPTY_STORE)
    }
}

impl<'p> Tape<'p> {
    pub fn with_params(params: &'p ParamStore) -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            params,
            nodes: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.value_at(v.index)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.index].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("recorded shape")
    }

    fn value_at(&self, index: usize) -> &[f64] {
        match &self.nodes[index].value {
            Value::Owned(v) => v,
            Value::Param(id) => self.params.get(*id).values(),
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "variable {} does not belong to this tape",
                v.index
            )));
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Value, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Records a leaf; it receives a gradient iff the tensor requires one.
    pub fn input(&mut self, tensor: &Tensor) -> Var {
        self.push(
            tensor.shape().to_vec(),
            Value::Owned(tensor.values().to_vec()),
            Op::Leaf,
            tensor.requires_grad(),
        )
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        let v = self.input(&t);
        Ok(v)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.input(&Tensor::zeros(shape))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id);
        self.push(t.shape().to_vec(), Value::Param(id), Op::Param(id), t.requires_grad())
    }

    /// `[m×k]·[k×n] → [m×n]`, or `[m×k]·[k] → [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (o, arow) in out.iter_mut().zip(av.chunks_exact(k.max(1))) {
                *o = arow.iter().zip(bv).map(|(x, y)| x * y).sum();
            }
        } else {
            for i in 0..m {
                let arow = &av[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &aip) in arow.iter().enumerate() {
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &bv[p * n..(p + 1) * n];
                    for (o, &bpj) in orow.iter_mut().zip(brow) {
                        *o += aip * bpj;
                    }
                }
            }
        }
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(shape, Value::Owned(out), Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("transpose", &s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let rg = self.needs(a);
        Ok(self.push(vec![c, r], Value::Owned(out), Op::Transpose(a), rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Graph("concat of an empty list".into()))?;
        for &v in inputs {
            self.check(v)?;
        }
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis..].iter().product::<usize>();
                out.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            shape,
            Value::Owned(out),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check(a)?;
        let s = self.shape(a);
        if shape.iter().product::<usize>() != s.iter().product::<usize>() || shape.contains(&0) {
            return Err(Error::shape("reshape", s, shape));
        }
        let values = self.value(a).to_vec();
        let rg = self.needs(a);
        Ok(self.push(shape.to_vec(), Value::Owned(values), Op::Reshape(a), rg))
    }

    /// Contiguous sub-range of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check(a)?;
        let s = self.shape(a);
        if s.len() != 1 || len == 0 || start + len > s[0] {
            return Err(Error::shape("slice", s, &[start, len]));
        }
        let values = self.value(a)[start..start + len].to_vec();
        let rg = self.needs(a);
        Ok(self.push(vec![len], Value::Owned(values), Op::Slice { input: a, start }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str) -> Result<Vec<f64>> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        Ok(match op {
            "add" => av.iter().zip(bv).map(|(x, y)| x + y).collect(),
            _ => av.iter().zip(bv).map(|(x, y)| x * y).collect(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), Value::Owned(out), Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), Value::Owned(out), Op::Mul(a, b), rg))
    }

    pub fn pointwise(&mut self, f: Activation, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).iter().map(|&x| f.apply(x)).collect();
        let rg = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), Value::Owned(out), Op::Act(f, a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.pointwise(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.pointwise(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.pointwise(Activation::Relu, a)
    }

    /// Row `row` of a rank-2 parameter table.
    pub fn lookup(&mut self, table: ParamId, row: usize) -> Result<Var> {
        let t = self.params.get(table);
        if t.shape().len() != 2 {
            return Err(Error::shape("lookup", t.shape(), &[row]));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        if row >= rows {
            return Err(Error::Index {
                what: "embedding table",
                index: row,
                size: rows,
            });
        }
        let values = t.values()[row * cols..(row + 1) * cols].to_vec();
        let rg = t.requires_grad();
        Ok(self.push(vec![cols], Value::Owned(values), Op::Lookup { table, row }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).iter().sum();
        let rg = self.needs(a);
        Ok(self.push(vec![1], Value::Owned(vec![s]), Op::Sum(a), rg))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let prod = self.binary(a, b, "dot")?;
        let s = prod.iter().sum();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(vec![1], Value::Owned(vec![s]), Op::Dot(a, b), rg))
    }

    /// `−log softmax(logits)[gold]`, computed with max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        self.check(logits)?;
        let s = self.shape(logits);
        if s.len() != 1 {
            return Err(Error::shape("softmax_cross_entropy", s, &[]));
        }
        if gold >= s[0] {
            return Err(Error::Index {
                what: "role inventory",
                index: gold,
                size: s[0],
            });
        }
        let probs = softmax(self.value(logits));
        let lv = self.value(logits);
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = lv.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        let loss = log_z - (lv[gold] - max);
        let rg = self.needs(logits);
        Ok(self.push(
            vec![1],
            Value::Owned(vec![loss]),
            Op::SoftmaxCe { logits, gold, probs },
            rg,
        ))
    }

    /// Sum of scalar variables as one scalar.
    pub fn sum_scalars(&mut self, scalars: &[Var]) -> Result<Var> {
        let joined = self.concat(scalars, 0)?;
        self.sum(joined)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        let mut params = ParamGrads::default();
        adj[loss.index] = Some(vec![1.0]);

        for i in (0..=loss.index).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let t = self.params.get(*id);
                    let cols = *t.shape().last().unwrap_or(&1);
                    params.add_dense(*id, t.len(), cols, &g);
                }
                Op::Lookup { table, row } => {
                    let t = self.params.get(*table);
                    params.add_row(*table, t.len(), t.shape()[1], *row, &g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let n = g.len() / m;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = grad_slot(&mut adj, *a, m * k);
                        if n == 1 {
                            for (garow, &gi) in ga.chunks_exact_mut(k.max(1)).zip(g.iter()) {
                                for (o, &bp) in garow.iter_mut().zip(bv) {
                                    *o += gi * bp;
                                }
                            }
                        } else {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    let brow = &bv[p * n..(p + 1) * n];
                                    ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                                }
                            }
                        }
                    }
                    if self.needs(*b) {
                        let gb = grad_slot(&mut adj, *b, k * n);
                        if n == 1 {
                            for (arow, &gi) in av.chunks_exact(k.max(1)).zip(g.iter()) {
                                for (o, &aip) in gb.iter_mut().zip(arow) {
                                    *o += aip * gi;
                                }
                            }
                        } else {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    let aip = av[i * k + p];
                                    if aip == 0.0 {
                                        continue;
                                    }
                                    for (o, &gij) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                        *o += aip * gij;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let ga = grad_slot(&mut adj, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::Concat { inputs, axis } => {
                    let outer: usize = node.shape[..*axis].iter().product();
                    let mut offset = 0;
                    for o in 0..outer {
                        for &v in inputs {
                            let chunk = self.shape(v)[*axis..].iter().product::<usize>();
                            if self.needs(v) {
                                let len = self.value(v).len();
                                let gv = grad_slot(&mut adj, v, len);
                                gv[o * chunk..(o + 1) * chunk]
                                    .iter_mut()
                                    .zip(&g[offset..offset + chunk])
                                    .for_each(|(x, y)| *x += y);
                            }
                            offset += chunk;
                        }
                    }
                }
                Op::Reshape(a) => add_into(grad_slot(&mut adj, *a, g.len()), &g),
                Op::Slice { input, start } => {
                    let len = self.value(*input).len();
                    let gi = grad_slot(&mut adj, *input, len);
                    add_into(&mut gi[*start..*start + g.len()], &g);
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            add_into(grad_slot(&mut adj, v, g.len()), &g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = grad_slot(&mut adj, *a, g.len());
                        for ((x, gi), bi) in ga.iter_mut().zip(&g).zip(bv) {
                            *x += gi * bi;
                        }
                    }
                    if self.needs(*b) {
                        let gb = grad_slot(&mut adj, *b, g.len());
                        for ((x, gi), ai) in gb.iter_mut().zip(&g).zip(av) {
                            *x += gi * ai;
                        }
                    }
                }
                Op::Act(f, a) => {
                    let xs = self.value(*a);
                    let ys = self.value_at(i);
                    let scale = match (f, self.fault) {
                        (Activation::Sigmoid, Some(Fault::SigmoidBackward)) => 1.1,
                        _ => 1.0,
                    };
                    let ga = grad_slot(&mut adj, *a, g.len());
                    for (((out, gi), &x), &y) in ga.iter_mut().zip(&g).zip(xs).zip(ys) {
                        *out += gi * f.derivative(x, y) * scale;
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    grad_slot(&mut adj, *a, len).iter_mut().for_each(|x| *x += g[0]);
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = grad_slot(&mut adj, *a, av.len());
                        ga.iter_mut().zip(bv).for_each(|(x, y)| *x += g[0] * y);
                    }
                    if self.needs(*b) {
                        let gb = grad_slot(&mut adj, *b, bv.len());
                        gb.iter_mut().zip(av).for_each(|(x, y)| *x += g[0] * y);
                    }
                }
                Op::SoftmaxCe { logits, gold, probs } => {
                    let gl = grad_slot(&mut adj, *logits, probs.len());
                    for (j, (x, p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *gold { 1.0 } else { 0.0 };
                        *x += g[0] * (p - onehot);
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                adj[i] = Some(g);
            }
        }

        Ok(Gradients {
            tape: self.id,
            leaves: adj,
            params,
        })
    }
}

fn grad_slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    adj[v.index].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Result of one backward pass.
pub struct Gradients {
    tape: usize,
    leaves: Vec<Option<Vec<f64>>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient of a leaf recorded with [`Tape::input`].
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.leaves.get(v.index).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of leaf `v` into `tensor`'s gradient slot.
    pub fn accumulate_leaf(&self, v: Var, tensor: &mut Tensor) {
        if let (Some(g), Some(slot)) = (self.wrt(v), tensor.grad_mut()) {
            add_into(slot, g);
        }
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

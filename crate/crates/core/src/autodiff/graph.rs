//! Tape of recorded operations with a reverse sweep.
//!
//! Nodes are appended in execution order, so the node vector is already a
//! topological order and backward is a single reverse pass over it.

use super::tensor::{split_axis, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to an entry in a parameter store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds accepted by [`Graph::apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Maximum,
    Scale(f64),
    AddScalar(f64),
    Powf(f64),
    Concat(usize),
    Stack(usize),
    Sum(usize),
    Mean(usize),
    SumAll,
    Tanh,
    Sigmoid,
    Relu,
    Softmax(usize),
    Slice { axis: usize, start: usize, end: usize },
    Broadcast(Vec<usize>),
    Reshape(Vec<usize>),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Maximum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Powf(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    SumAll(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax { x: Var, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Broadcast(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Reverse-mode differentiation tape.
pub struct Graph {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], kept for leaves that require them.
pub struct NodeGrads {
    grads: Vec<Option<Tensor>>,
}

impl NodeGrads {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), recording: true }
    }

    /// A graph that computes values without recording backward information.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Constant input; no gradient is computed for it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false, None)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, self.recording, None)
    }

    pub fn param(&mut self, t: Tensor, id: ParamId) -> Var {
        self.push_leaf(t, self.recording, Some(id))
    }

    /// Parameter leaves registered on this graph.
    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, Var(i))))
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, param });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = self.recording && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad, param: None });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Generic dispatch by operation kind.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                return Err(Error::Contract(format!(
                    "{kind:?} expects {n} inputs, got {}",
                    inputs.len()
                )));
            }
            Ok(())
        };
        match kind {
            OpKind::MatMul => arity(2).and_then(|_| self.matmul(inputs[0], inputs[1])),
            OpKind::Add => arity(2).and_then(|_| self.add(inputs[0], inputs[1])),
            OpKind::Sub => arity(2).and_then(|_| self.sub(inputs[0], inputs[1])),
            OpKind::Mul => arity(2).and_then(|_| self.mul(inputs[0], inputs[1])),
            OpKind::Maximum => arity(2).and_then(|_| self.maximum(inputs[0], inputs[1])),
            OpKind::Scale(s) => arity(1).and_then(|_| self.scale(inputs[0], s)),
            OpKind::AddScalar(s) => arity(1).and_then(|_| self.add_scalar(inputs[0], s)),
            OpKind::Powf(p) => arity(1).and_then(|_| self.powf(inputs[0], p)),
            OpKind::Concat(axis) => self.concat(inputs, axis),
            OpKind::Stack(axis) => self.stack(inputs, axis),
            OpKind::Sum(axis) => arity(1).and_then(|_| self.sum(inputs[0], axis)),
            OpKind::Mean(axis) => arity(1).and_then(|_| self.mean(inputs[0], axis)),
            OpKind::SumAll => arity(1).and_then(|_| self.sum_all(inputs[0])),
            OpKind::Tanh => arity(1).and_then(|_| self.tanh(inputs[0])),
            OpKind::Sigmoid => arity(1).and_then(|_| self.sigmoid(inputs[0])),
            OpKind::Relu => arity(1).and_then(|_| self.relu(inputs[0])),
            OpKind::Softmax(axis) => arity(1).and_then(|_| self.softmax(inputs[0], axis)),
            OpKind::Slice { axis, start, end } => {
                arity(1).and_then(|_| self.slice(inputs[0], axis, start, end))
            }
            OpKind::Broadcast(ref shape) => arity(1).and_then(|_| self.broadcast(inputs[0], shape)),
            OpKind::Reshape(ref shape) => arity(1).and_then(|_| self.reshape(inputs[0], shape)),
        }
    }

    // ---- linear algebra -------------------------------------------------

    /// `[m × k] · [k × n] -> [m × n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            (m, k, n),
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            0.0,
        );
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    // ---- elementwise ----------------------------------------------------

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, t, op, &[a, b])
    }

    fn map(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, t, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("maximum", a, b, Op::Maximum(a, b), f64::max)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map("scale", a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map("add_scalar", a, Op::AddScalar(a), |x| x + s)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        self.map("powf", a, Op::Powf(a, p), |x| x.powf(p))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    // ---- structural -----------------------------------------------------

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == base.len()
                && s.iter().enumerate().all(|(d, &n)| d == axis || n == base[d]);
            if !ok {
                let shapes: Vec<_> = inputs.iter().map(|&v| self.shape(v).to_vec()).collect();
                return Err(Error::shape("concat", format!("{shapes:?} along {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let op = Op::Concat { inputs: inputs.to_vec(), axis };
        self.push("concat", Tensor::new(shape, out)?, op, inputs)
    }

    /// Stacks equally shaped tensors along a new axis.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let mut expanded = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let mut s = self.shape(v).to_vec();
            if axis > s.len() {
                return Err(Error::shape("stack", format!("axis {axis} for {s:?}")));
            }
            s.insert(axis, 1);
            expanded.push(self.reshape(v, &s)?);
        }
        self.concat(&expanded, axis)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::shape("slice", format!("{s:?} axis {axis} [{start}, {end})")));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        let data = self.value(x).data();
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&data[base + start * inner..base + end * inner]);
        }
        let mut shape = s;
        shape[axis] = width;
        self.push("slice", Tensor::new(shape, out)?, Op::Slice { x, axis, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", t, Op::Reshape(x), &[x])
    }

    /// Right-aligned broadcast: each source dimension is 1 or equals the target.
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let src = self.shape(x).to_vec();
        let strides = broadcast_strides(&src, shape)
            .ok_or_else(|| Error::shape("broadcast", format!("{src:?} -> {shape:?}")))?;
        let n: usize = shape.iter().product();
        let mut out = vec![0.0; n];
        let data = self.value(x).data();
        for_each_broadcast(shape, &strides, |o, s| out[o] = data[s]);
        self.push("broadcast", Tensor::new(shape.to_vec(), out)?, Op::Broadcast(x), &[x])
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (shape, out) = self.reduce_axis("sum", x, axis)?;
        self.push("sum", Tensor::new(shape, out)?, Op::Sum { x, axis }, &[x])
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (shape, mut out) = self.reduce_axis("mean", x, axis)?;
        let len = self.shape(x)[axis] as f64;
        out.iter_mut().for_each(|v| *v /= len);
        self.push("mean", Tensor::new(shape, out)?, Op::Mean { x, axis }, &[x])
    }

    fn reduce_axis(&self, name: &'static str, x: Var, axis: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let s = self.shape(x);
        if axis >= s.len() {
            return Err(Error::shape(name, format!("axis {axis} for {s:?}")));
        }
        let (outer, len, inner) = split_axis(s, axis);
        let data = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let row = &data[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let mut shape = s.to_vec();
        shape.remove(axis);
        Ok((shape, out))
    }

    /// Sum of every element, giving a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().sum();
        self.push("sum_all", Tensor::scalar(total), Op::SumAll(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::shape("softmax", format!("axis {axis} for {s:?}")));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let data = self.value(x).data();
        let mut out = vec![0.0; data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| data[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..len {
                    let e = (data[idx(a)] - max).exp();
                    out[idx(a)] = e;
                    z += e;
                }
                for a in 0..len {
                    out[idx(a)] /= z;
                }
            }
        }
        self.push("softmax", Tensor::new(s, out)?, Op::Softmax { x, axis }, &[x])
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a rank-0 `loss`.
    pub fn backward(&self, loss: Var) -> Result<NodeGrads> {
        if !self.nodes[loss.0].value.shape().is_empty() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.recording {
            return Err(Error::Contract("backward on a non-recording graph".into()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                out[i] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                continue;
            }
            self.backward_node(i, &g, &mut grads);
        }
        Ok(NodeGrads { grads: out })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    let ga = slot(grads, *a, m * k);
                    // dA = dC · Bᵀ
                    gemm((m, n, k), g, (n, 1), self.value(*b).data(), (1, n), ga, 1.0);
                }
                if self.needs(*b) {
                    let gb = slot(grads, *b, k * n);
                    // dB = Aᵀ · dC
                    gemm((k, m, n), self.value(*a).data(), (1, k), g, (n, 1), gb, 1.0);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, g.iter().zip(vb).map(|(g, y)| g * y));
                self.accumulate(grads, *b, g.iter().zip(va).map(|(g, x)| g * x));
            }
            Op::Maximum(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let pick_a = |j: usize| va[j] >= vb[j];
                self.accumulate(grads, *a, g.iter().enumerate().map(|(j, g)| if pick_a(j) { *g } else { 0.0 }));
                self.accumulate(grads, *b, g.iter().enumerate().map(|(j, g)| if pick_a(j) { 0.0 } else { *g }));
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.iter().map(|v| v * s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.iter().copied()),
            Op::Powf(a, p) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, g.iter().zip(x).map(|(g, x)| g * p * x.powf(p - 1.0)));
            }
            Op::Tanh(a) => self.accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y))),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y))),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    if self.needs(v) {
                        let gv = slot(grads, v, outer * len * inner);
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            for (d, s) in gv[o * len * inner..(o + 1) * len * inner].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                if self.needs(*x) {
                    let xs = self.shape(*x).to_vec();
                    let (outer, len, inner) = split_axis(&xs, *axis);
                    let width = node.value.shape()[*axis];
                    let gx = slot(grads, *x, outer * len * inner);
                    for o in 0..outer {
                        let dst = &mut gx[(o * len + start) * inner..(o * len + start + width) * inner];
                        let src = &g[o * width * inner..(o + 1) * width * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.iter().copied()),
            Op::Broadcast(x) => {
                if self.needs(*x) {
                    let src = self.shape(*x).to_vec();
                    let strides = broadcast_strides(&src, node.value.shape()).expect("validated in forward");
                    let gx = slot(grads, *x, src.iter().product());
                    for_each_broadcast(node.value.shape(), &strides, |o, s| gx[s] += g[o]);
                }
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                if self.needs(*x) {
                    let xs = self.shape(*x).to_vec();
                    let (outer, len, inner) = split_axis(&xs, *axis);
                    let factor = if matches!(node.op, Op::Mean { .. }) { 1.0 / len as f64 } else { 1.0 };
                    let gx = slot(grads, *x, outer * len * inner);
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for a in 0..len {
                            let dst = &mut gx[(o * len + a) * inner..(o * len + a + 1) * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s * factor;
                            }
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, std::iter::repeat_n(g[0], n));
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        for a in 0..len {
                            dx[idx(a)] = y[idx(a)] * (g[idx(a)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, dx.into_iter());
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, values: impl Iterator<Item = f64>) {
        if !self.needs(v) {
            return;
        }
        let n = self.value(v).numel();
        let dst = slot(grads, v, n);
        for (d, s) in dst.iter_mut().zip(values) {
            *d += s;
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = a · b + beta · c` for an `m × k` by `k × n` product with explicit strides.
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: callers pass buffers sized for the given extents and strides;
    // `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn broadcast_strides(src: &[usize], target: &[usize]) -> Option<Vec<usize>> {
    if src.len() > target.len() {
        return None;
    }
    let offset = target.len() - src.len();
    let mut src_strides = vec![0usize; src.len()];
    let mut acc = 1;
    for d in (0..src.len()).rev() {
        src_strides[d] = acc;
        acc *= src[d];
    }
    let mut strides = vec![0usize; target.len()];
    for d in 0..target.len() {
        if d < offset {
            continue;
        }
        let sd = d - offset;
        if src[sd] == target[d] {
            strides[d] = if src[sd] == 1 { 0 } else { src_strides[sd] };
        } else if src[sd] != 1 {
            return None;
        }
    }
    Some(strides)
}

/// Visits (output index, source index) pairs of a broadcast in row-major order.
fn for_each_broadcast(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    if shape.is_empty() {
        f(0, 0);
        return;
    }
    let rank = shape.len();
    let last = shape[rank - 1];
    let last_stride = strides[rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let mut base = 0usize;
    let mut o = 0usize;
    loop {
        for j in 0..last {
            f(o + j, base + j * last_stride);
        }
        o += last;
        if o >= n {
            break;
        }
        // odometer over leading dims
        let mut d = rank - 1;
        loop {
            d -= 1;
            idx[d] += 1;
            base += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            base -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

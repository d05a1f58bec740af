//! Tape of tensor operations with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards
//! visits every node after all of its consumers.

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Binary(Elementwise, NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Activate(Activation, NodeId),
    OneMinus(NodeId),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
        padding: Option<usize>,
    },
    GatherWindows {
        table: NodeId,
        ids: Vec<usize>,
        seq_len: usize,
        width: usize,
        padding: Option<usize>,
    },
    MaxOverTime {
        src: NodeId,
        argmax: Vec<usize>,
    },
    Sum(NodeId),
    BceMean {
        probs: NodeId,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Probability clamp applied before taking logs in the BCE loss.
pub const BCE_CLIP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn apply(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Sigmoid => sigmoid(x),
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        let v = &self.nodes[id.0].value;
        (v.rows(), v.cols())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn elementwise(&mut self, op: Elementwise, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("elementwise", va.shape(), vb.shape()));
        }
        let f = match op {
            Elementwise::Add => |x: f64, y: f64| x + y,
            Elementwise::Sub => |x: f64, y: f64| x - y,
            Elementwise::Mul => |x: f64, y: f64| x * y,
        };
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    /// Adds a `[1, n]` bias to every row of an `[m, n]` input.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        let (br, bn) = self.shape(bias);
        if br != 1 || bn != n {
            return Err(Error::shape("add_row_bias", &[m, n], &[br, bn]));
        }
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::AddRowBias(x, bias), rg))
    }

    pub fn activation(&mut self, act: Activation, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| apply(act, v));
        let rg = self.needs(&[x]);
        self.push(value, Op::Activate(act, x), rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Tanh, x)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Relu, x)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| 1.0 - v);
        let rg = self.needs(&[x]);
        self.push(value, Op::OneMinus(x), rg)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if start >= end || end > n {
            return Err(Error::shape("slice_cols", &[m, n], &[start, end]));
        }
        let w = end - start;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&src[r * n + start..r * n + end]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(m, w, data)?, Op::SliceCols(x, start), rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if start >= end || end > m {
            return Err(Error::shape("slice_rows", &[m, n], &[start, end]));
        }
        let data = self.value(x).data()[start * n..end * n].to_vec();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(end - start, n, data)?, Op::SliceRows(x, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let m = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != m {
                return Err(Error::shape("concat_cols", &[m], &[r]));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`. Rows whose id equals
    /// `padding` read as zeros and send no gradient back.
    pub fn gather(&mut self, table: NodeId, ids: &[usize], padding: Option<usize>) -> Result<NodeId> {
        let (v, d) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather", &[v, d], &[bad]));
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if Some(i) == padding {
                data.extend(std::iter::repeat(0.0).take(d));
            } else {
                data.extend_from_slice(t.row_slice(i));
            }
        }
        let value = Tensor::matrix(ids.len(), d, data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                padding,
            },
            rg,
        ))
    }

    /// Sliding-window lookup for convolution. `ids` holds `B` sequences of
    /// `seq_len` ids back to back; the output has one row per (sequence,
    /// window start), `B * (seq_len - width + 1)` rows of `width * d`
    /// columns, each the concatenated embeddings of the window.
    pub fn gather_windows(
        &mut self,
        table: NodeId,
        ids: &[usize],
        seq_len: usize,
        width: usize,
        padding: Option<usize>,
    ) -> Result<NodeId> {
        let (v, d) = self.shape(table);
        if seq_len == 0 || ids.len() % seq_len != 0 {
            return Err(Error::shape("gather_windows", &[ids.len()], &[seq_len]));
        }
        if width == 0 || width > seq_len {
            return Err(Error::shape("gather_windows", &[seq_len], &[width]));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather_windows", &[v, d], &[bad]));
        }
        let batch = ids.len() / seq_len;
        let positions = seq_len - width + 1;
        let t = self.value(table);
        let mut data = Vec::with_capacity(batch * positions * width * d);
        for b in 0..batch {
            let seq = &ids[b * seq_len..(b + 1) * seq_len];
            for p in 0..positions {
                for &i in &seq[p..p + width] {
                    if Some(i) == padding {
                        data.extend(std::iter::repeat(0.0).take(d));
                    } else {
                        data.extend_from_slice(t.row_slice(i));
                    }
                }
            }
        }
        let value = Tensor::matrix(batch * positions, width * d, data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(
            value,
            Op::GatherWindows {
                table,
                ids: ids.to_vec(),
                seq_len,
                width,
                padding,
            },
            rg,
        ))
    }

    /// Column-wise maximum over consecutive groups of `steps` rows:
    /// `[B * steps, d] -> [B, d]`. Ties resolve to the earliest row.
    pub fn max_over_time(&mut self, x: NodeId, steps: usize) -> Result<NodeId> {
        let (m, d) = self.shape(x);
        if steps == 0 || m == 0 {
            return Err(Error::EmptySequence("max_over_time"));
        }
        if m % steps != 0 {
            return Err(Error::shape("max_over_time", &[m, d], &[steps]));
        }
        let batch = m / steps;
        let src = self.value(x);
        let mut out = vec![f64::NEG_INFINITY; batch * d];
        let mut argmax = vec![0usize; batch * d];
        for b in 0..batch {
            for t in 0..steps {
                let row = src.row_slice(b * steps + t);
                for j in 0..d {
                    if row[j] > out[b * d + j] {
                        out[b * d + j] = row[j];
                        argmax[b * d + j] = b * steps + t;
                    }
                }
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(batch, d, out)?, Op::MaxOverTime { src: x, argmax }, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean binary cross-entropy of `[B, 1]` probabilities against 0/1 targets.
    pub fn bce_mean(&mut self, probs: NodeId, targets: &[f64]) -> Result<NodeId> {
        let p = self.value(probs);
        if p.len() != targets.len() || targets.is_empty() {
            return Err(Error::shape("bce_mean", p.shape(), &[targets.len()]));
        }
        let loss = p
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| bce_loss(p, y))
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.needs(&[probs]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceMean {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::shape("backward", out.shape(), &[1]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let target = &self.nodes[id.0];
            if !target.requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(target.value.shape()));
            f(slot.data_mut());
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = (va.rows(), va.cols());
                let n = vb.cols();
                acc(*a, &mut |da| gemm_nt_acc(g.data(), vb.data(), da, m, n, k));
                acc(*b, &mut |db| gemm_tn_acc(va.data(), g.data(), db, m, k, n));
            }
            Op::Binary(op, a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                match op {
                    Elementwise::Add => {
                        acc(*a, &mut |d| add_into(d, g.data()));
                        acc(*b, &mut |d| add_into(d, g.data()));
                    }
                    Elementwise::Sub => {
                        acc(*a, &mut |d| add_into(d, g.data()));
                        acc(*b, &mut |d| {
                            for (x, gv) in d.iter_mut().zip(g.data()) {
                                *x -= gv;
                            }
                        });
                    }
                    Elementwise::Mul => {
                        acc(*a, &mut |d| mul_add_into(d, g.data(), vb.data()));
                        acc(*b, &mut |d| mul_add_into(d, g.data(), va.data()));
                    }
                }
            }
            Op::AddRowBias(x, bias) => {
                acc(*x, &mut |d| add_into(d, g.data()));
                let n = g.cols();
                acc(*bias, &mut |d| {
                    for row in g.data().chunks(n) {
                        add_into(d, row);
                    }
                });
            }
            Op::Activate(act, x) => {
                let y = node.value.data();
                let xin = self.value(*x).data();
                acc(*x, &mut |d| {
                    for i in 0..d.len() {
                        let local = match act {
                            Activation::Sigmoid => y[i] * (1.0 - y[i]),
                            Activation::Tanh => 1.0 - y[i] * y[i],
                            Activation::Relu => {
                                if xin[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                        d[i] += g.data()[i] * local;
                    }
                });
            }
            Op::OneMinus(x) => acc(*x, &mut |d| {
                for (v, gv) in d.iter_mut().zip(g.data()) {
                    *v -= gv;
                }
            }),
            Op::SliceCols(x, start) => {
                let n = self.value(*x).cols();
                let w = g.cols();
                acc(*x, &mut |d| {
                    for (r, grow) in g.data().chunks(w).enumerate() {
                        add_into(&mut d[r * n + start..r * n + start + w], grow);
                    }
                });
            }
            Op::SliceRows(x, start) => {
                let n = g.cols();
                acc(*x, &mut |d| add_into(&mut d[start * n..start * n + g.len()], g.data()));
            }
            Op::ConcatCols(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &mut |d| {
                        for (r, grow) in g.data().chunks(n).enumerate() {
                            add_into(&mut d[r * w..(r + 1) * w], &grow[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather { table, ids, padding } => {
                let dim = g.cols();
                acc(*table, &mut |d| {
                    for (r, &i) in ids.iter().enumerate() {
                        if Some(i) != *padding {
                            add_into(&mut d[i * dim..(i + 1) * dim], &g.data()[r * dim..(r + 1) * dim]);
                        }
                    }
                });
            }
            Op::GatherWindows {
                table,
                ids,
                seq_len,
                width,
                padding,
            } => {
                let dim = self.value(*table).cols();
                let positions = seq_len - width + 1;
                let row_w = width * dim;
                acc(*table, &mut |d| {
                    for (b, seq) in ids.chunks(*seq_len).enumerate() {
                        for p in 0..positions {
                            let grow = &g.data()[(b * positions + p) * row_w..][..row_w];
                            for (k, &i) in seq[p..p + width].iter().enumerate() {
                                if Some(i) != *padding {
                                    add_into(&mut d[i * dim..(i + 1) * dim], &grow[k * dim..(k + 1) * dim]);
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxOverTime { src, argmax } => {
                let dcols = g.cols();
                acc(*src, &mut |d| {
                    for (o, &row) in argmax.iter().enumerate() {
                        d[row * dcols + o % dcols] += g.data()[o];
                    }
                });
            }
            Op::Sum(x) => {
                let s = g.data()[0];
                acc(*x, &mut |d| d.iter_mut().for_each(|v| *v += s));
            }
            Op::BceMean { probs, targets } => {
                let p = self.value(*probs).data();
                let scale = g.data()[0] / targets.len() as f64;
                acc(*probs, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += scale * bce_grad(p[i], targets[i]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn mul_add_into(dst: &mut [f64], g: &[f64], other: &[f64]) {
    for ((d, gv), o) in dst.iter_mut().zip(g).zip(other) {
        *d += gv * o;
    }
}

/// `-[y ln p + (1-y) ln(1-p)]` with `p` clamped to `[1e-7, 1 - 1e-7]`.
///
/// An exact hit (`p == y`, before clamping) scores zero.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    if p == y {
        return 0.0;
    }
    let pc = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
}

/// d/dp of [`bce_loss`]; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if !(BCE_CLIP..=1.0 - BCE_CLIP).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

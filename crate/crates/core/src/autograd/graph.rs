//! Tape of tensor operations with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid reverse topological order. Leaf gradients persist across calls to
//! [`Graph::backward`] and accumulate until [`Graph::zero_grads`].

use super::gemm::{gemm, View};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    MatMul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Conv1d { x: Var, w: Var, b: Var },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Reshape(Var),
    Permute3 { x: Var, perm: [usize; 3] },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Sum(Var),
    Softmax(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    MaskedMse { pred: Var, target: Vec<f64>, weight: Vec<f64>, denom: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
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

/// Column buffer for a same-padded 1-D convolution: `(cin * k) x (batch * len)`.
fn im2col(x: &[f64], batch: usize, cin: usize, len: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cols_n = batch * len;
    let mut cols = vec![0.0; cin * k * cols_n];
    for b in 0..batch {
        for c in 0..cin {
            let src = &x[(b * cin + c) * len..(b * cin + c + 1) * len];
            for t in 0..k {
                let row = &mut cols[(c * k + t) * cols_n + b * len..(c * k + t) * cols_n + (b + 1) * len];
                for l in 0..len {
                    let pos = l + t;
                    if pos >= pad && pos - pad < len {
                        row[l] = src[pos - pad];
                    }
                }
            }
        }
    }
    cols
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = &mut node.grad {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// `x + bias` where `bias` matches the last dimension of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [n] {
            return Err(Error::shape(format!(
                "bias {:?} for input {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for row in out.data_mut().chunks_mut(n) {
            add_into(row, b);
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.map(x, |v| scale * v + shift);
        self.push(out, Op::Affine(x, scale), &[x])
    }

    /// `a: m x k` times `b: k x n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            View::rows(self.value(a).data(), k),
            View::rows(self.value(b).data(), n),
            0.0,
            &mut out,
        );
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map(x, f64::tanh);
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.map(x, |v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope), &[x])
    }

    /// Same-padded 1-D convolution. `x: B x Cin x L`, `w: Cout x Cin x K`
    /// (K odd), `b: Cout`; output `B x Cout x L`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(Error::shape(format!("conv1d input {sx:?}, kernel {sw:?}")));
        }
        let (batch, cin, len) = (sx[0], sx[1], sx[2]);
        let (cout, wcin, k) = (sw[0], sw[1], sw[2]);
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv1d channel mismatch: input has {cin}, kernel expects {wcin}"
            )));
        }
        if k % 2 == 0 {
            return Err(Error::invalid(format!("conv1d kernel width {k} must be odd")));
        }
        if self.shape(b) != [cout] {
            return Err(Error::shape(format!("conv1d bias {:?}, expected [{cout}]", self.shape(b))));
        }
        let cols = im2col(self.value(x).data(), batch, cin, len, k);
        let cols_n = batch * len;
        let mut y2 = vec![0.0; cout * cols_n];
        gemm(
            cout,
            cin * k,
            cols_n,
            View::rows(self.value(w).data(), cin * k),
            View::rows(&cols, cols_n),
            0.0,
            &mut y2,
        );
        let bias = self.value(b).data();
        let mut out = vec![0.0; batch * cout * len];
        for bi in 0..batch {
            for co in 0..cout {
                let dst = &mut out[(bi * cout + co) * len..(bi * cout + co + 1) * len];
                let src = &y2[co * cols_n + bi * len..co * cols_n + (bi + 1) * len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bias[co];
                }
            }
        }
        let out = Tensor::new(vec![batch, cout, len], out)?;
        Ok(self.push(out, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    /// Max-pool of width and stride 2 over the last axis. An odd trailing
    /// element forms its own window; ties pick the first element.
    pub fn maxpool1d(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let len = *shape.last().ok_or_else(|| Error::shape("maxpool on scalar"))?;
        if len == 0 {
            return Err(Error::shape("maxpool on empty axis"));
        }
        let out_len = len.div_ceil(2);
        let data = self.value(x).data();
        let rows = data.len() / len;
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let row = &data[r * len..(r + 1) * len];
            for o in 0..out_len {
                let i = 2 * o;
                let pick = if i + 1 < len && row[i + 1] > row[i] { i + 1 } else { i };
                out.push(row[pick]);
                argmax.push(r * len + pick);
            }
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = out_len;
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::MaxPool1d { x, argmax }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Axis permutation of a 3-D tensor: output axis `i` is input axis `perm[i]`.
    pub fn permute3(&mut self, x: Var, perm: [usize; 3]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("permute3 on {s:?}")));
        }
        let mut sorted = perm;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::invalid(format!("invalid permutation {perm:?}")));
        }
        let out_shape = vec![s[perm[0]], s[perm[1]], s[perm[2]]];
        let in_strides = [s[1] * s[2], s[2], 1];
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(data.len());
        for i in 0..out_shape[0] {
            for j in 0..out_shape[1] {
                for k in 0..out_shape[2] {
                    let idx = [i, j, k];
                    let mut src = 0;
                    for (o, &p) in perm.iter().enumerate() {
                        src += idx[o] * in_strides[p];
                    }
                    out.push(data[src]);
                }
            }
        }
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::Permute3 { x, perm }, &[x]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*inputs.first().ok_or_else(|| Error::shape("concat of nothing"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape(format!("concat axis {axis} for {first:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::shape(format!("concat {s:?} with {first:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::shape(format!("slice {start}..{end} of axis {axis} in {s:?}")));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&data[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let k = *shape.last().ok_or_else(|| Error::shape("softmax on scalar"))?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(k) {
            softmax_in_place(row);
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    /// Summed cross-entropy of `logits: R x K` against class indices, computed
    /// through a stable log-softmax.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape(format!(
                "cross-entropy logits {s:?} for {} targets",
                targets.len()
            )));
        }
        let k = s[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::invalid(format!("class {t} out of range for {k} classes")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (row, &t) in probs.chunks_mut(k).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            softmax_in_place(row);
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Weighted squared error averaged over the total weight. With zero total
    /// weight the loss is 0.
    pub fn masked_mse(&mut self, pred: Var, target: &[f64], weight: &[f64]) -> Result<Var> {
        let n = self.value(pred).len();
        if target.len() != n || weight.len() != n {
            return Err(Error::shape(format!(
                "masked_mse over {n} predictions with {} targets and {} weights",
                target.len(),
                weight.len()
            )));
        }
        let denom: f64 = weight.iter().sum();
        let loss = if denom > 0.0 {
            self.value(pred)
                .data()
                .iter()
                .zip(target)
                .zip(weight)
                .map(|((p, t), w)| w * (p - t) * (p - t))
                .sum::<f64>()
                / denom
        } else {
            log::warn!("masked_mse called with an all-zero weight mask");
            0.0
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedMse {
                pred,
                target: target.to_vec(),
                weight: weight.to_vec(),
                denom,
            },
            &[pred],
        ))
    }

    /// Back-propagates from a scalar loss, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => add_into(acc, &g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let mut send = |v: Var, contrib: &dyn Fn(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            contrib(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, &|s| add_into(s, g));
                send(*b, &|s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                send(*a, &|s| add_into(s, g));
                send(*b, &|s| s.iter_mut().zip(g).for_each(|(d, gv)| *d -= gv));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                send(*a, &|s| {
                    for ((d, gv), y) in s.iter_mut().zip(g).zip(vb) {
                        *d += gv * y;
                    }
                });
                send(*b, &|s| {
                    for ((d, gv), x) in s.iter_mut().zip(g).zip(va) {
                        *d += gv * x;
                    }
                });
            }
            Op::AddBias(x, b) => {
                send(*x, &|s| add_into(s, g));
                let n = nodes[b.0].value.len();
                send(*b, &|s| {
                    for row in g.chunks(n) {
                        add_into(s, row);
                    }
                });
            }
            Op::Affine(x, scale) => {
                send(*x, &|s| s.iter_mut().zip(g).for_each(|(d, gv)| *d += scale * gv));
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                // dA = G * B^T, dB = A^T * G
                send(*a, &|s| gemm(m, n, k, View::rows(g, n), View::t(vb, n), 1.0, s));
                send(*b, &|s| gemm(k, m, n, View::t(va, k), View::rows(g, n), 1.0, s));
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                send(*x, &|s| {
                    for ((d, gv), yv) in s.iter_mut().zip(g).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = out.data();
                send(*x, &|s| {
                    for ((d, gv), yv) in s.iter_mut().zip(g).zip(y) {
                        *d += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                send(*x, &|s| {
                    for ((d, gv), v) in s.iter_mut().zip(g).zip(xv) {
                        if *v > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::LeakyRelu(x, slope) => {
                let xv = nodes[x.0].value.data();
                send(*x, &|s| {
                    for ((d, gv), v) in s.iter_mut().zip(g).zip(xv) {
                        *d += if *v > 0.0 { *gv } else { slope * gv };
                    }
                });
            }
            Op::Conv1d { x, w, b } => {
                let sx = nodes[x.0].value.shape();
                let sw = nodes[w.0].value.shape();
                let (batch, cin, len) = (sx[0], sx[1], sx[2]);
                let (cout, k) = (sw[0], sw[2]);
                let cols_n = batch * len;
                let mut gy2 = vec![0.0; cout * cols_n];
                for bi in 0..batch {
                    for co in 0..cout {
                        gy2[co * cols_n + bi * len..co * cols_n + (bi + 1) * len]
                            .copy_from_slice(&g[(bi * cout + co) * len..(bi * cout + co + 1) * len]);
                    }
                }
                send(*b, &|s| {
                    for (co, d) in s.iter_mut().enumerate() {
                        *d += gy2[co * cols_n..(co + 1) * cols_n].iter().sum::<f64>();
                    }
                });
                if nodes[w.0].requires_grad {
                    let cols = im2col(nodes[x.0].value.data(), batch, cin, len, k);
                    send(*w, &|s| {
                        gemm(cout, cols_n, cin * k, View::rows(&gy2, cols_n), View::t(&cols, cols_n), 1.0, s)
                    });
                }
                if nodes[x.0].requires_grad {
                    let wv = nodes[w.0].value.data();
                    let mut gcols = vec![0.0; cin * k * cols_n];
                    gemm(cin * k, cout, cols_n, View::t(wv, cin * k), View::rows(&gy2, cols_n), 0.0, &mut gcols);
                    let pad = k / 2;
                    send(*x, &|s| {
                        for bi in 0..batch {
                            for c in 0..cin {
                                let dst = &mut s[(bi * cin + c) * len..(bi * cin + c + 1) * len];
                                for t in 0..k {
                                    let row = &gcols[(c * k + t) * cols_n + bi * len..];
                                    for l in 0..len {
                                        let pos = l + t;
                                        if pos >= pad && pos - pad < len {
                                            dst[pos - pad] += row[l];
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::MaxPool1d { x, argmax } => {
                send(*x, &|s| {
                    for (gv, &src) in g.iter().zip(argmax) {
                        s[src] += gv;
                    }
                });
            }
            Op::Reshape(x) => send(*x, &|s| add_into(s, g)),
            Op::Permute3 { x, perm } => {
                let si = nodes[x.0].value.shape();
                let in_strides = [si[1] * si[2], si[2], 1];
                let so = out.shape();
                send(*x, &|s| {
                    let mut o = 0;
                    for i in 0..so[0] {
                        for j in 0..so[1] {
                            for k in 0..so[2] {
                                let idx = [i, j, k];
                                let mut src = 0;
                                for (ax, &p) in perm.iter().enumerate() {
                                    src += idx[ax] * in_strides[p];
                                }
                                s[src] += g[o];
                                o += 1;
                            }
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let part = nodes[v.0].value.shape()[*axis];
                    send(v, &|s| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + part) * inner];
                            add_into(&mut s[o * part * inner..(o + 1) * part * inner], src);
                        }
                    });
                    offset += part;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, len, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                let part = out.shape()[*axis];
                send(*x, &|s| {
                    for o in 0..outer {
                        add_into(
                            &mut s[(o * len + start) * inner..(o * len + start + part) * inner],
                            &g[o * part * inner..(o + 1) * part * inner],
                        );
                    }
                });
            }
            Op::Sum(x) => send(*x, &|s| s.iter_mut().for_each(|d| *d += g[0])),
            Op::Softmax(x) => {
                let y = out.data();
                let k = *out.shape().last().unwrap();
                send(*x, &|s| {
                    for ((sr, gr), yr) in s.chunks_mut(k).zip(g.chunks(k)).zip(y.chunks(k)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in sr.iter_mut().zip(gr).zip(yr) {
                            *d += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let k = nodes[logits.0].value.shape()[1];
                send(*logits, &|s| {
                    for (r, &t) in targets.iter().enumerate() {
                        for c in 0..k {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            s[r * k + c] += g[0] * (probs[r * k + c] - onehot);
                        }
                    }
                });
            }
            Op::MaskedMse { pred, target, weight, denom } => {
                if *denom > 0.0 {
                    let p = nodes[pred.0].value.data();
                    send(*pred, &|s| {
                        for (idx, d) in s.iter_mut().enumerate() {
                            *d += g[0] * 2.0 * weight[idx] * (p[idx] - target[idx]) / denom;
                        }
                    });
                }
            }
        }
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `-ln p[class]` for a probability vector.
pub fn cross_entropy(probs: &[f64], class: usize) -> f64 {
    -probs[class].ln()
}

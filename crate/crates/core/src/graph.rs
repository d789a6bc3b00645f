//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a define-by-run Wengert list: every operation evaluates
//! eagerly and records enough to replay the chain rule backwards. Graphs
//! are rebuilt per minibatch and thrown away; no caching.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    /// Input, constant, or parameter. `param_slot` indexes the bound ParamSet.
    Leaf { param_slot: Option<usize> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    /// Elementwise minimum; gradient follows the smaller input (ties -> lhs).
    MinElem(NodeId, NodeId),
    Neg(NodeId),
    ScaleConst(NodeId, f64),
    AddConst(NodeId),
    /// Elementwise multiply by a detached weight tensor (no gradient into weights).
    MulConstTensor(NodeId),
    Matmul(NodeId, NodeId),
    /// x[n,m] + v[m], broadcast over rows.
    AddRowBroadcast(NodeId, NodeId),
    /// x[n,m] * v[m], broadcast over rows.
    MulRowBroadcast(NodeId, NodeId),
    /// x[..] + s (scalar node), broadcast everywhere.
    AddScalar(NodeId, NodeId),
    Concat2(NodeId, NodeId),
    /// Row-wise dot product of two [n,d] tensors -> [n].
    RowDot(NodeId, NodeId),
    /// Sum over the last dimension: [n,m] -> [n].
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    Square(NodeId),
    Exp(NodeId),
    Tanh(NodeId),
    Gelu(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Clip(NodeId, f64, f64),
    LayerNorm { x: NodeId, scale: NodeId, offset: NodeId },
    /// Asymmetric squared loss |tau - 1(x<0)| x^2, elementwise.
    Expectile(NodeId, f64),
}

struct Node {
    op: Op,
    value: Tensor,
    /// Detached payload for MulConstTensor.
    aux: Option<Tensor>,
}

pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-12;

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::with_capacity(64) }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value, aux: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Constant or input leaf; receives a gradient but is not collected as a parameter.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf { param_slot: None }, t)
    }

    /// Parameter leaf bound to slot `slot` of the owning ParamSet.
    pub fn param(&mut self, t: Tensor, slot: usize) -> NodeId {
        self.push(Op::Leaf { param_slot: Some(slot) }, t)
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        let v = zip_tensors(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        let v = zip_tensors(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul_elem")?;
        let v = zip_tensors(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::MulElem(a, b), v))
    }

    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "min_elem")?;
        let v = zip_tensors(self.value(a), self.value(b), f64::min);
        Ok(self.push(Op::MinElem(a, b), v))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::ScaleConst(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    /// Elementwise product with a detached tensor (same shape). Gradients flow
    /// only through `a`; `w` is treated as a constant weight.
    pub fn mul_detached(&mut self, a: NodeId, w: Tensor) -> Result<NodeId> {
        if !self.value(a).same_shape(&w) {
            return Err(Error::shape(format!(
                "mul_detached: {:?} vs {:?}",
                self.value(a).shape(),
                w.shape()
            )));
        }
        let v = zip_tensors(self.value(a), &w, |x, y| x * y);
        let id = self.push(Op::MulConstTensor(a), v);
        self.nodes[id.0].aux = Some(w);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(ta.values(), tb.values(), &mut out, n, k, m);
        let v = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn add_row_broadcast(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (tx, tv) = (self.value(x), self.value(v));
        if tx.rank() != 2 || tv.rank() != 1 || tx.shape()[1] != tv.shape()[0] {
            return Err(Error::shape(format!(
                "add_row_broadcast: {:?} + {:?}",
                tx.shape(),
                tv.shape()
            )));
        }
        let (n, m) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            for c in 0..m {
                out.push(tx.values()[r * m + c] + tv.values()[c]);
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::AddRowBroadcast(x, v), t))
    }

    pub fn mul_row_broadcast(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (tx, tv) = (self.value(x), self.value(v));
        if tx.rank() != 2 || tv.rank() != 1 || tx.shape()[1] != tv.shape()[0] {
            return Err(Error::shape(format!(
                "mul_row_broadcast: {:?} * {:?}",
                tx.shape(),
                tv.shape()
            )));
        }
        let (n, m) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            for c in 0..m {
                out.push(tx.values()[r * m + c] * tv.values()[c]);
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::MulRowBroadcast(x, v), t))
    }

    pub fn add_scalar_node(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("add_scalar_node: rhs is not scalar"));
        }
        let sv = self.value(s).values()[0];
        let v = self.value(x).map(|a| a + sv);
        Ok(self.push(Op::AddScalar(x, s), v))
    }

    /// Concatenate along the last dimension: [n,p] ++ [n,q] -> [n,p+q].
    pub fn concat2(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[0] != tb.shape()[0] {
            return Err(Error::shape(format!(
                "concat2: {:?} ++ {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, p, q) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            out.extend_from_slice(&ta.values()[r * p..(r + 1) * p]);
            out.extend_from_slice(&tb.values()[r * q..(r + 1) * q]);
        }
        let t = Tensor::new(vec![n, p + q], out)?;
        Ok(self.push(Op::Concat2(a, b), t))
    }

    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "row_dot")?;
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::shape("row_dot: rank-2 required"));
        }
        let (n, d) = (ta.shape()[0], ta.shape()[1]);
        let tb = self.value(b);
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let mut s = 0.0;
            for c in 0..d {
                s += ta.values()[r * d + c] * tb.values()[r * d + c];
            }
            out.push(s);
        }
        let t = Tensor::new(vec![n], out)?;
        Ok(self.push(Op::RowDot(a, b), t))
    }

    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::shape("row_sum: rank-2 required"));
        }
        let (n, m) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            out.push(tx.values()[r * m..(r + 1) * m].iter().sum());
        }
        let t = Tensor::new(vec![n], out)?;
        Ok(self.push(Op::RowSum(x), t))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).values().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len() as f64;
        let s: f64 = self.value(x).values().iter().sum();
        self.push(Op::MeanAll(x), Tensor::scalar(s / n))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a * a);
        self.push(Op::Square(x), v)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(gelu);
        self.push(Op::Gelu(x), v)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(Op::Relu(x), v)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(softplus);
        self.push(Op::Softplus(x), v)
    }

    pub fn clip(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(Op::Clip(x, lo, hi), v)
    }

    /// Row-wise layer normalization with learnable scale/offset vectors.
    pub fn layer_norm(&mut self, x: NodeId, scale: NodeId, offset: NodeId) -> Result<NodeId> {
        let (tx, ts, to) = (self.value(x), self.value(scale), self.value(offset));
        if tx.rank() != 2
            || ts.rank() != 1
            || to.rank() != 1
            || ts.shape()[0] != tx.shape()[1]
            || to.shape()[0] != tx.shape()[1]
        {
            return Err(Error::shape(format!(
                "layer_norm: x {:?}, scale {:?}, offset {:?}",
                tx.shape(),
                ts.shape(),
                to.shape()
            )));
        }
        let (n, m) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            let row = &tx.values()[r * m..(r + 1) * m];
            let (xhat, _, _) = ln_row_stats(row);
            for c in 0..m {
                out.push(xhat[c] * ts.values()[c] + to.values()[c]);
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::LayerNorm { x, scale, offset }, t))
    }

    /// Expectile loss |tau - 1(x<0)| x^2 applied elementwise.
    pub fn expectile(&mut self, x: NodeId, tau: f64) -> Result<NodeId> {
        if !(0.0 < tau && tau < 1.0) {
            return Err(Error::invalid(format!("expectile tau {tau} outside (0,1)")));
        }
        let v = self.value(x).map(|a| expectile_weight(a, tau) * a * a);
        Ok(self.push(Op::Expectile(x, tau), v))
    }

    /// Gradients of a scalar `loss` with respect to every node.
    ///
    /// Returned vector is indexed by node id; untouched nodes hold zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward: loss has shape {:?}, expected scalar",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        grads[loss.0].values_mut()[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let g = grads[i].clone();
            if g.values().iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf { .. } => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.values());
                    accumulate(&mut grads[b.0], g.values());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], g.values());
                    accumulate_scaled(&mut grads[b.0], g.values(), -1.0);
                }
                Op::MulElem(a, b) => {
                    let bv: Vec<f64> = self.value(*b).values().to_vec();
                    let av: Vec<f64> = self.value(*a).values().to_vec();
                    accumulate_prod(&mut grads[a.0], g.values(), &bv);
                    accumulate_prod(&mut grads[b.0], g.values(), &av);
                }
                Op::Neg(a) => accumulate_scaled(&mut grads[a.0], g.values(), -1.0),
                Op::ScaleConst(a, c) => accumulate_scaled(&mut grads[a.0], g.values(), *c),
                Op::AddConst(a) => accumulate(&mut grads[a.0], g.values()),
                Op::MulConstTensor(a) => {
                    let w = self.nodes[i].aux.as_ref().expect("weight payload");
                    accumulate_prod(&mut grads[a.0], g.values(), w.values());
                }
                Op::Matmul(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    // dA = dC @ B^T
                    let mut da = vec![0.0; n * k];
                    for r in 0..n {
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g.values()[r * m + j] * tb.values()[c * m + j];
                            }
                            da[r * k + c] = s;
                        }
                    }
                    accumulate(&mut grads[a.0], &da);
                    // dB = A^T @ dC
                    let mut db = vec![0.0; k * m];
                    for r in 0..n {
                        for c in 0..k {
                            let av = ta.values()[r * k + c];
                            if av != 0.0 {
                                for j in 0..m {
                                    db[c * m + j] += av * g.values()[r * m + j];
                                }
                            }
                        }
                    }
                    accumulate(&mut grads[b.0], &db);
                }
                Op::AddRowBroadcast(x, v) => {
                    accumulate(&mut grads[x.0], g.values());
                    let m = self.value(*v).len();
                    let mut dv = vec![0.0; m];
                    for (idx, gv) in g.values().iter().enumerate() {
                        dv[idx % m] += gv;
                    }
                    accumulate(&mut grads[v.0], &dv);
                }
                Op::MulRowBroadcast(x, v) => {
                    let tx = self.value(*x);
                    let tv = self.value(*v);
                    let m = tv.len();
                    let mut dx = vec![0.0; tx.len()];
                    let mut dv = vec![0.0; m];
                    for (idx, gv) in g.values().iter().enumerate() {
                        dx[idx] = gv * tv.values()[idx % m];
                        dv[idx % m] += gv * tx.values()[idx];
                    }
                    accumulate(&mut grads[x.0], &dx);
                    accumulate(&mut grads[v.0], &dv);
                }
                Op::AddScalar(x, s) => {
                    accumulate(&mut grads[x.0], g.values());
                    let total: f64 = g.values().iter().sum();
                    grads[s.0].values_mut()[0] += total;
                }
                Op::Concat2(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, p, q) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let mut da = vec![0.0; n * p];
                    let mut db = vec![0.0; n * q];
                    for r in 0..n {
                        let base = r * (p + q);
                        da[r * p..(r + 1) * p].copy_from_slice(&g.values()[base..base + p]);
                        db[r * q..(r + 1) * q]
                            .copy_from_slice(&g.values()[base + p..base + p + q]);
                    }
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::RowDot(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, d) = (ta.shape()[0], ta.shape()[1]);
                    let mut da = vec![0.0; n * d];
                    let mut db = vec![0.0; n * d];
                    for r in 0..n {
                        let gr = g.values()[r];
                        for c in 0..d {
                            da[r * d + c] = gr * tb.values()[r * d + c];
                            db[r * d + c] = gr * ta.values()[r * d + c];
                        }
                    }
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::RowSum(x) => {
                    let tx = self.value(*x);
                    let (n, m) = (tx.shape()[0], tx.shape()[1]);
                    let mut dx = vec![0.0; n * m];
                    for r in 0..n {
                        for c in 0..m {
                            dx[r * m + c] = g.values()[r];
                        }
                    }
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::SumAll(x) => {
                    let gv = g.values()[0];
                    let dx = vec![gv; self.value(*x).len()];
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::MeanAll(x) => {
                    let n = self.value(*x).len();
                    let gv = g.values()[0] / n as f64;
                    let dx = vec![gv; n];
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Square(x) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| 2.0 * a * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Exp(x) => {
                    let out = &self.nodes[i].value;
                    let dx: Vec<f64> = out
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&e, &gv)| e * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Tanh(x) => {
                    let out = &self.nodes[i].value;
                    let dx: Vec<f64> = out
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&t, &gv)| (1.0 - t * t) * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Gelu(x) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| gelu_grad(a) * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| if a > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Softplus(x) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| sigmoid(a) * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Clip(x, lo, hi) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| if a >= *lo && a <= *hi { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::LayerNorm { x, scale, offset } => {
                    let tx = self.value(*x);
                    let ts = self.value(*scale);
                    let (n, m) = (tx.shape()[0], tx.shape()[1]);
                    let mut dx = vec![0.0; n * m];
                    let mut dscale = vec![0.0; m];
                    let mut doffset = vec![0.0; m];
                    for r in 0..n {
                        let row = &tx.values()[r * m..(r + 1) * m];
                        let grow = &g.values()[r * m..(r + 1) * m];
                        let (xhat, _, inv_std) = ln_row_stats(row);
                        // dxhat = g * scale; then the two mean-removal terms.
                        let mut dxhat = vec![0.0; m];
                        for c in 0..m {
                            dxhat[c] = grow[c] * ts.values()[c];
                            dscale[c] += grow[c] * xhat[c];
                            doffset[c] += grow[c];
                        }
                        let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / m as f64;
                        let mean_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                        for c in 0..m {
                            dx[r * m + c] =
                                inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        }
                    }
                    accumulate(&mut grads[x.0], &dx);
                    accumulate(&mut grads[scale.0], &dscale);
                    accumulate(&mut grads[offset.0], &doffset);
                }
                Op::Expectile(x, tau) => {
                    let dx: Vec<f64> = self
                        .value(*x)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(&a, &gv)| 2.0 * expectile_weight(a, *tau) * a * gv)
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
            }
        }
        Ok(grads)
    }

    /// Parameter slots present in this graph, as (slot, node) pairs.
    pub fn param_slots(&self) -> Vec<(usize, NodeId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { param_slot: Some(s) } => Some((s, NodeId(i))),
                _ => None,
            })
            .collect()
    }
}

fn zip_tensors(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), values).expect("zip_tensors: shapes checked")
}

fn accumulate(dst: &mut Tensor, src: &[f64]) {
    for (d, s) in dst.values_mut().iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate_scaled(dst: &mut Tensor, src: &[f64], c: f64) {
    for (d, s) in dst.values_mut().iter_mut().zip(src) {
        *d += c * s;
    }
}

fn accumulate_prod(dst: &mut Tensor, a: &[f64], b: &[f64]) {
    for ((d, x), y) in dst.values_mut().iter_mut().zip(a).zip(b) {
        *d += x * y;
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    // ikj order: streams over b and out rows.
    for r in 0..n {
        for kk in 0..k {
            let av = a[r * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * m..(kk + 1) * m];
            let orow = &mut out[r * m..(r + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// Row stats for layer norm: (normalized row, mean, 1/sqrt(var+eps)).
fn ln_row_stats(row: &[f64]) -> (Vec<f64>, f64, f64) {
    let m = row.len() as f64;
    let mean = row.iter().sum::<f64>() / m;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat = row.iter().map(|&v| (v - mean) * inv_std).collect();
    (xhat, mean, inv_std)
}

fn expectile_weight(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        (tau - 1.0).abs()
    } else {
        tau
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph() -> (Graph, NodeId) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        (g, x)
    }

    #[test]
    fn mean_all_backward_divides() {
        let (mut g, x) = scalar_graph();
        let m = g.mean_all(x);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads[0].values(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn matmul_matches_manual() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = g.constant(Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).values(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let (mut g, x) = scalar_graph();
        let y = g.square(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn zero_loss_yields_zero_grads() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, -2.0]));
        let zero = g.scale(x, 0.0);
        let loss = g.sum_all(zero);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads[0].values(), &[0.0, 0.0]);
    }

    #[test]
    fn expectile_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, -1.0]));
        let e = g.expectile(x, 0.7).unwrap();
        let v = g.value(e).values();
        assert!((v[0] - 0.7).abs() < 1e-15);
        assert!((v[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn clip_gradient_masks_outside() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![-2.0, 0.5, 2.0]));
        let c = g.clip(x, -1.0, 1.0);
        let s = g.sum_all(c);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads[0].values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap());
        let ones = g.constant(Tensor::vector(vec![1.0; 4]));
        let zeros = g.constant(Tensor::vector(vec![0.0; 4]));
        let y = g.layer_norm(x, ones, zeros).unwrap();
        let row = g.value(y).values();
        let mean: f64 = row.iter().sum::<f64>() / 4.0;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }
}

//! MLP construction, the Adam optimizer, target-network smoothing, and
//! the binary parameter checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use crate::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Gelu,
    Relu,
}

/// Architecture of a multi-layer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Gelu,
            layer_norm: false,
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = on;
        self
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("mlp dims must be >= 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("hidden_dims must be non-empty and positive"));
        }
        Ok(())
    }

    /// Parameter names and shapes in canonical order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        let mut prev = self.input_dim;
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            layout.push((format!("layers.{i}.weight"), vec![prev, h]));
            layout.push((format!("layers.{i}.bias"), vec![h]));
            if self.layer_norm {
                layout.push((format!("layers.{i}.ln_scale"), vec![h]));
                layout.push((format!("layers.{i}.ln_offset"), vec![h]));
            }
            prev = h;
        }
        layout.push(("out.weight".to_string(), vec![prev, self.output_dim]));
        layout.push(("out.bias".to_string(), vec![self.output_dim]));
        layout
    }

    /// Fan-in scaled uniform weights, zero biases, unit layer-norm scales.
    pub fn init(&self, rng: &mut Rng) -> ParamSet {
        let mut set = ParamSet::default();
        for (name, shape) in self.param_layout() {
            let t = if name.ends_with(".weight") {
                let fan_in = shape[0] as f64;
                let bound = 1.0 / fan_in.sqrt();
                let values = (0..shape.iter().product::<usize>())
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Tensor::new(shape, values).expect("init shape")
            } else if name.ends_with(".ln_scale") {
                Tensor::new(shape.clone(), vec![1.0; shape[0]]).expect("init shape")
            } else {
                Tensor::zeros(shape)
            };
            set.push(name, t);
        }
        set
    }

    /// Build the forward pass on a graph. `params` are node bindings in
    /// `param_layout` order; `input` is a [batch, input_dim] node.
    pub fn apply(&self, g: &mut Graph, params: &[NodeId], input: NodeId) -> Result<NodeId> {
        let in_cols = g.value(input).ncols();
        if in_cols != self.input_dim {
            return Err(Error::shape(format!(
                "mlp input dim {} != spec {}",
                in_cols, self.input_dim
            )));
        }
        let mut idx = 0;
        let mut next = |n: usize| {
            let out = params[idx..idx + n].to_vec();
            idx += n;
            out
        };
        let mut x = input;
        for _ in 0..self.hidden_dims.len() {
            let wb = next(2);
            x = g.matmul(x, wb[0])?;
            x = g.add_row_broadcast(x, wb[1])?;
            if self.layer_norm {
                let so = next(2);
                x = g.layer_norm(x, so[0], so[1])?;
            }
            x = match self.activation {
                Activation::Gelu => g.gelu(x),
                Activation::Relu => g.relu(x),
            };
        }
        let wb = next(2);
        x = g.matmul(x, wb[0])?;
        x = g.add_row_broadcast(x, wb[1])?;
        Ok(x)
    }

    /// Pure forward pass: same computation as [`MlpSpec::apply`] on a
    /// throwaway graph, so training and inference can never diverge.
    pub fn forward(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(as_matrix(input)?);
        let bound = bind_params(&mut g, params, false);
        let y = self.apply(&mut g, &bound, x)?;
        let out = g.value(y).clone();
        out.check_finite("mlp forward output")?;
        let out = if input.rank() == 1 {
            Tensor::vector(out.values().to_vec())
        } else {
            out
        };
        Ok(out)
    }
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    /// Zero tensors congruent with this set.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
                .collect(),
        }
    }

    pub fn congruent(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((an, at), (bn, bt))| an == bn && at.same_shape(bt))
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Bind every tensor of a ParamSet onto the graph. When `trainable`,
/// leaves carry the param slot so gradients can be collected.
pub fn bind_params(g: &mut Graph, params: &ParamSet, trainable: bool) -> Vec<NodeId> {
    (0..params.len())
        .map(|i| {
            let t = params.tensor(i).clone();
            if trainable {
                g.param(t, i)
            } else {
                g.constant(t)
            }
        })
        .collect()
}

/// Collect gradients of `loss` into a ParamSet congruent with `params`.
/// Parameters absent from the graph get zero gradients.
pub fn collect_grads(g: &Graph, loss: NodeId, params: &ParamSet) -> Result<ParamSet> {
    let node_grads = g.backward(loss)?;
    let mut out = params.zeros_like();
    for (slot, node) in g.param_slots() {
        let src = &node_grads[node.index()];
        let dst = out.tensor_mut(slot);
        debug_assert!(dst.same_shape(src));
        for (d, s) in dst.values_mut().iter_mut().zip(src.values()) {
            *d += s;
        }
    }
    Ok(out)
}

fn as_matrix(t: &Tensor) -> Result<Tensor> {
    match t.rank() {
        2 => Ok(t.clone()),
        1 => Tensor::new(vec![1, t.len()], t.values().to_vec()),
        r => Err(Error::shape(format!("expected rank 1 or 2, got {r}"))),
    }
}

/// Adam optimizer state (bias-corrected first/second moments).
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet,
    v: ParamSet,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    if !params.congruent(grads) || !params.congruent(&state.m) {
        return Err(Error::shape("adam_step: incongruent parameter sets"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads.tensor(i).values().to_vec();
        let m = state.m.tensor_mut(i).values_mut();
        for (mv, gv) in m.iter_mut().zip(&g) {
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
        }
        let m = state.m.tensor(i).values().to_vec();
        let v = state.v.tensor_mut(i).values_mut();
        for (vv, gv) in v.iter_mut().zip(&g) {
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
        }
        let v = state.v.tensor(i).values().to_vec();
        let p = params.tensor_mut(i).values_mut();
        for ((pv, mv), vv) in p.iter_mut().zip(&m).zip(&v) {
            let mhat = mv / bc1;
            let vhat = vv / bc2;
            *pv -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// target <- tau * online + (1 - tau) * target, elementwise.
pub fn polyak_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<()> {
    if !target.congruent(online) {
        return Err(Error::shape("polyak_update: incongruent sets"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("polyak tau {tau} outside (0,1]")));
    }
    for i in 0..target.len() {
        let src = online.tensor(i).values().to_vec();
        for (t, o) in target.tensor_mut(i).values_mut().iter_mut().zip(&src) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

// ── Checkpoint format ────────────────────────────────────────────────
//
// magic "ORLP", version u32 LE, tensor count u32 LE, then per tensor:
// name length u32 + UTF-8 bytes, rank u32, extents u32 each, values f64 LE.

const PARAM_MAGIC: &[u8; 4] = b"ORLP";
const PARAM_VERSION: u32 = 1;

pub fn write_params<W: Write>(w: &mut W, params: &ParamSet) -> Result<()> {
    w.write_all(PARAM_MAGIC)?;
    w.write_all(&PARAM_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in t.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(r: &mut R) -> Result<ParamSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PARAM_MAGIC {
        return Err(Error::Format("bad magic for parameter file".into()));
    }
    let version = read_u32(r)?;
    if version != PARAM_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut set = ParamSet::default();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("non-UTF-8 tensor name".into()))?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        set.push(name, Tensor::new(shape, values)?);
    }
    Ok(set)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_params(path: impl AsRef<Path>, params: &ParamSet) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_params(&mut f, params)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamSet> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_params(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_net_maps_to_zero() {
        let spec = MlpSpec::new(3, &[4], 2);
        let mut params = spec.init(&mut rng(0));
        for i in 0..params.len() {
            for v in params.tensor_mut(i).values_mut() {
                *v = 0.0;
            }
        }
        let out = spec
            .forward(&params, &Tensor::vector(vec![0.3, -1.0, 2.0]))
            .unwrap();
        assert_eq!(out.values(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_is_pure() {
        let spec = MlpSpec::new(3, &[8, 8], 2).with_layer_norm(true);
        let params = spec.init(&mut rng(7));
        let x = Tensor::vector(vec![0.5, -0.25, 1.5]);
        let a = spec.forward(&params, &x).unwrap();
        let b = spec.forward(&params, &x).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let spec = MlpSpec::new(2, &[3], 1);
        let mut params = spec.init(&mut rng(1));
        let before = params.clone();
        let grads = params.zeros_like();
        let mut st = AdamState::new(&params, 0.1);
        adam_step(&mut params, &grads, &mut st).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut params = ParamSet::default();
        params.push("x", Tensor::scalar(0.0));
        let mut grads = ParamSet::default();
        grads.push("x", Tensor::scalar(1.0));
        let mut st = AdamState::new(&params, 0.1);
        adam_step(&mut params, &grads, &mut st).unwrap();
        let x = params.tensor(0).item();
        assert!((x + 0.1).abs() < 1e-8, "x = {x}");
    }

    #[test]
    fn polyak_examples() {
        let mut target = ParamSet::default();
        target.push("w", Tensor::scalar(0.0));
        let mut online = ParamSet::default();
        online.push("w", Tensor::scalar(1.0));

        let mut t1 = target.clone();
        polyak_update(&mut t1, &online, 1.0).unwrap();
        assert_eq!(t1.tensor(0).item(), 1.0);

        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!((target.tensor(0).item() - 0.005).abs() < 1e-15);

        // 999 more updates: 1 - 0.995^1000
        for _ in 0..999 {
            polyak_update(&mut target, &online, 0.005).unwrap();
        }
        let expected = 1.0 - 0.995f64.powi(1000);
        assert!((target.tensor(0).item() - expected).abs() < 1e-12);
        online.push("extra", Tensor::scalar(0.0));
        assert!(polyak_update(&mut target, &online, 0.5).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let spec = MlpSpec::new(5, &[7, 3], 2).with_layer_norm(true);
        let params = spec.init(&mut rng(42));
        let mut buf = Vec::new();
        write_params(&mut buf, &params).unwrap();
        let loaded = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(params, loaded);
        let mut buf2 = Vec::new();
        write_params(&mut buf2, &loaded).unwrap();
        assert_eq!(buf, buf2);
    }
}

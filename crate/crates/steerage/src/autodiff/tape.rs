//! Reverse-mode autodiff over an insertion-ordered tape.
//!
//! Nodes are appended in topological order by construction, so the backward
//! pass is a single reverse sweep. Each node caches its forward value;
//! gradients are accumulated into per-node buffers and read out by `ValueId`.

use rand::Rng;

use super::kernels::{self, Conv1dDims, Conv3dDims, GroupNormCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    Matmul {
        a: ValueId,
        b: ValueId,
        r: usize,
        k: usize,
        c: usize,
    },
    MatVec {
        m: ValueId,
        v: ValueId,
        r: usize,
        k: usize,
    },
    Conv3d {
        input: ValueId,
        kernels: ValueId,
        dims: Conv3dDims,
    },
    Conv1d {
        input: ValueId,
        kernels: ValueId,
        dims: Conv1dDims,
    },
    AddChannelBias {
        x: ValueId,
        bias: ValueId,
        spatial: usize,
    },
    Relu(ValueId),
    Elu(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    Sqrt(ValueId),
    Abs(ValueId),
    Dropout {
        x: ValueId,
        mask: Vec<f64>,
    },
    GroupNorm {
        x: ValueId,
        gain: ValueId,
        bias: ValueId,
        channels: usize,
        spatial: usize,
        groups: usize,
        cache: GroupNormCache,
    },
    AvgPool2x2 {
        x: ValueId,
        lead: usize,
        h: usize,
        w: usize,
    },
    GlobalAvg {
        x: ValueId,
        channels: usize,
        spatial: usize,
    },
    Concat(Vec<ValueId>),
    Slice {
        x: ValueId,
        start: usize,
        len: usize,
    },
    Reshape(ValueId),
    SumAll(ValueId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    tracked: bool,
}

/// Gradients of one scalar loss, indexed by the tape's `ValueId`s.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient buffer for `id`; zeros when the loss never touched it.
    pub fn wrt(&self, id: ValueId) -> &[f64] {
        &self.grads[id.0]
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tracked leaf: gradients will be accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value, true)
    }

    /// Untracked leaf: data flows forward, gradients stay zero.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, tracked: bool) -> ValueId {
        self.nodes.push(Node { op, value, tracked });
        ValueId(self.nodes.len() - 1)
    }

    fn push_from(&mut self, op: Op, value: Tensor, parents: &[ValueId]) -> ValueId {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.push(op, value, tracked)
    }

    fn want_same_shape(&self, what: &str, a: ValueId, b: ValueId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!(
                "{what} requires matching shapes, got {sa:?} and {sb:?}"
            )));
        }
        Ok(())
    }

    // ------------------------------------------------------- arithmetic ---

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.want_same_shape("add", a, b)?;
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Add(a, b), value, &[a, b]))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.want_same_shape("sub", a, b)?;
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Sub(a, b), value, &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.want_same_shape("mul", a, b)?;
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Mul(a, b), value, &[a, b]))
    }

    /// Multiply by a compile-time constant (not differentiated w.r.t. `k`).
    pub fn scale(&mut self, a: ValueId, k: f64) -> Result<ValueId> {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| x * k).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Scale(a, k), value, &[a]))
    }

    // ----------------------------------------------------- linear algebra ---

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!(
                "matmul requires [r×k]·[k×c], got {sa:?} and {sb:?}"
            )));
        }
        let (r, k, c) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul_forward(self.value(a).data(), self.value(b).data(), r, k, c);
        let value = Tensor::new(vec![r, c], data)?;
        Ok(self.push_from(Op::Matmul { a, b, r, k, c }, value, &[a, b]))
    }

    pub fn matvec(&mut self, m: ValueId, v: ValueId) -> Result<ValueId> {
        let (sm, sv) = (self.value(m).shape(), self.value(v).shape());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(Error::shape(format!(
                "matvec requires [r×k]·[k], got {sm:?} and {sv:?}"
            )));
        }
        let (r, k) = (sm[0], sm[1]);
        let data = kernels::matvec_forward(self.value(m).data(), self.value(v).data(), r, k);
        let value = Tensor::new(vec![r], data)?;
        Ok(self.push_from(Op::MatVec { m, v, r, k }, value, &[m, v]))
    }

    // ----------------------------------------------------- convolutions ---

    pub fn conv3d(
        &mut self,
        input: ValueId,
        kernels_id: ValueId,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<ValueId> {
        let (si, sk) = (self.value(input).shape(), self.value(kernels_id).shape());
        if si.len() != 4 || sk.len() != 5 {
            return Err(Error::shape(format!(
                "conv3d requires input [C_in×D×H×W] and kernels [C_out×C_in×kd×kh×kw], got {si:?} and {sk:?}"
            )));
        }
        if si[0] != sk[1] {
            return Err(Error::shape(format!(
                "conv3d channel mismatch: input has {} channels, kernels expect {}",
                si[0], sk[1]
            )));
        }
        if stride.contains(&0) {
            return Err(Error::config("conv3d stride must be >= 1"));
        }
        let dims = Conv3dDims {
            c_in: si[0],
            d: si[1],
            h: si[2],
            w: si[3],
            c_out: sk[0],
            kd: sk[2],
            kh: sk[3],
            kw: sk[4],
            stride,
            pad,
        };
        let padded = [si[1] + 2 * pad[0], si[2] + 2 * pad[1], si[3] + 2 * pad[2]];
        if sk[2] > padded[0] || sk[3] > padded[1] || sk[4] > padded[2] {
            return Err(Error::shape(format!(
                "conv3d kernel {:?} larger than padded input {padded:?}",
                &sk[2..]
            )));
        }
        let data =
            kernels::conv3d_forward(self.value(input).data(), self.value(kernels_id).data(), &dims);
        let value = Tensor::new(vec![dims.c_out, dims.out_d(), dims.out_h(), dims.out_w()], data)?;
        Ok(self.push_from(
            Op::Conv3d {
                input,
                kernels: kernels_id,
                dims,
            },
            value,
            &[input, kernels_id],
        ))
    }

    pub fn conv1d(
        &mut self,
        input: ValueId,
        kernels_id: ValueId,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let (si, sk) = (self.value(input).shape(), self.value(kernels_id).shape());
        if si.len() != 2 || sk.len() != 3 {
            return Err(Error::shape(format!(
                "conv1d requires input [C_in×L] and kernels [C_out×C_in×k], got {si:?} and {sk:?}"
            )));
        }
        if si[0] != sk[1] {
            return Err(Error::shape(format!(
                "conv1d channel mismatch: input has {} channels, kernels expect {}",
                si[0], sk[1]
            )));
        }
        if stride == 0 {
            return Err(Error::config("conv1d stride must be >= 1"));
        }
        if sk[2] > si[1] + 2 * pad {
            return Err(Error::shape(format!(
                "conv1d kernel length {} larger than padded input length {}",
                sk[2],
                si[1] + 2 * pad
            )));
        }
        let dims = Conv1dDims {
            c_in: si[0],
            l: si[1],
            c_out: sk[0],
            k: sk[2],
            stride,
            pad,
        };
        let data =
            kernels::conv1d_forward(self.value(input).data(), self.value(kernels_id).data(), &dims);
        let value = Tensor::new(vec![dims.c_out, dims.out_l()], data)?;
        Ok(self.push_from(
            Op::Conv1d {
                input,
                kernels: kernels_id,
                dims,
            },
            value,
            &[input, kernels_id],
        ))
    }

    /// y[c, s] = x[c, s] + bias[c] for x of shape [C, ...spatial].
    pub fn add_channel_bias(&mut self, x: ValueId, bias: ValueId) -> Result<ValueId> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        if sx.is_empty() || sb.len() != 1 || sb[0] != sx[0] {
            return Err(Error::shape(format!(
                "channel bias requires x [C×...] and bias [C], got {sx:?} and {sb:?}"
            )));
        }
        let spatial = self.value(x).len() / sx[0];
        let bias_data = self.value(bias).data().to_vec();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias_data[i / spatial])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        Ok(self.push_from(Op::AddChannelBias { x, bias, spatial }, value, &[x, bias]))
    }

    // ------------------------------------------------------- activations ---

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Relu(x), value, &[x]))
    }

    /// ELU with alpha = 1: x for x > 0, e^x - 1 otherwise.
    pub fn elu(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Elu(x), value, &[x]))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Sigmoid(x), value, &[x]))
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v.tanh()).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Tanh(x), value, &[x]))
    }

    pub fn sqrt(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v.sqrt()).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Sqrt(x), value, &[x]))
    }

    pub fn abs(&mut self, x: ValueId) -> Result<ValueId> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v.abs()).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Abs(x), value, &[x]))
    }

    // ---------------------------------------------------- regularization ---

    /// Inverted dropout: in training, zeroes with probability `rate` and
    /// scales survivors by 1/(1-rate); outside training it is the identity.
    pub fn dropout<R: Rng>(
        &mut self,
        x: ValueId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<ValueId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push_from(Op::Dropout { x, mask }, value, &[x]))
    }

    /// Group normalization over a [C, ...spatial] tensor with per-channel affine.
    pub fn group_norm(
        &mut self,
        x: ValueId,
        groups: usize,
        eps: f64,
        gain: ValueId,
        bias: ValueId,
    ) -> Result<ValueId> {
        let sx = self.value(x).shape();
        if sx.is_empty() {
            return Err(Error::shape(format!("group_norm requires [C×...], got {sx:?}")));
        }
        let channels = sx[0];
        if groups == 0 || !channels.is_multiple_of(groups) {
            return Err(Error::config(format!(
                "group_norm: {channels} channels not divisible into {groups} groups"
            )));
        }
        for (name, id) in [("gain", gain), ("bias", bias)] {
            let s = self.value(id).shape();
            if s.len() != 1 || s[0] != channels {
                return Err(Error::shape(format!(
                    "group_norm {name} must be [{channels}], got {s:?}"
                )));
            }
        }
        let spatial = self.value(x).len() / channels;
        let (data, cache) = kernels::group_norm_forward(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            channels,
            spatial,
            groups,
            eps,
        );
        let value = Tensor::new(sx.to_vec(), data)?;
        Ok(self.push_from(
            Op::GroupNorm {
                x,
                gain,
                bias,
                channels,
                spatial,
                groups,
                cache,
            },
            value,
            &[x, gain, bias],
        ))
    }

    // ----------------------------------------------------------- pooling ---

    /// 2×2 mean pool on the trailing two axes; both must be even.
    pub fn avg_pool2x2(&mut self, x: ValueId) -> Result<ValueId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() < 2 {
            return Err(Error::shape(format!(
                "avg_pool2x2 requires rank >= 2, got {sx:?}"
            )));
        }
        let (h, w) = (sx[sx.len() - 2], sx[sx.len() - 1]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!(
                "avg_pool2x2 requires even trailing dims, got {h}×{w}"
            )));
        }
        let lead: usize = sx[..sx.len() - 2].iter().product();
        let data = kernels::avg_pool2x2_forward(self.value(x).data(), lead, h, w);
        let mut out_shape = sx.clone();
        let n = out_shape.len();
        out_shape[n - 2] = h / 2;
        out_shape[n - 1] = w / 2;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push_from(Op::AvgPool2x2 { x, lead, h, w }, value, &[x]))
    }

    /// Mean over everything but the channel axis: [C, ...spatial] -> [C].
    pub fn global_avg(&mut self, x: ValueId) -> Result<ValueId> {
        let sx = self.value(x).shape();
        if sx.is_empty() {
            return Err(Error::shape(format!("global_avg requires [C×...], got {sx:?}")));
        }
        let channels = sx[0];
        let spatial = self.value(x).len() / channels;
        let data = kernels::global_avg_forward(self.value(x).data(), channels, spatial);
        let value = Tensor::new(vec![channels], data)?;
        Ok(self.push_from(
            Op::GlobalAvg {
                x,
                channels,
                spatial,
            },
            value,
            &[x],
        ))
    }

    // ------------------------------------------------------------- shape ---

    /// Flattens every part and concatenates into one vector.
    pub fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::shape("concat requires at least one input"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![data.len()], data)?;
        Ok(self.push_from(Op::Concat(parts.to_vec()), value, parts))
    }

    /// 1-D slice of the flattened data.
    pub fn slice(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let total = self.value(x).len();
        if len == 0 || start + len > total {
            return Err(Error::shape(format!(
                "slice [{start}..{}) out of range for length {total}",
                start + len
            )));
        }
        let data = self.value(x).data()[start..start + len].to_vec();
        let value = Tensor::new(vec![len], data)?;
        Ok(self.push_from(Op::Slice { x, start, len }, value, &[x]))
    }

    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> Result<ValueId> {
        let value = Tensor::new(shape, self.value(x).data().to_vec())?;
        Ok(self.push_from(Op::Reshape(x), value, &[x]))
    }

    // -------------------------------------------------------- reductions ---

    pub fn sum_all(&mut self, x: ValueId) -> Result<ValueId> {
        let s: f64 = self.value(x).data().iter().sum();
        Ok(self.push_from(Op::SumAll(x), Tensor::scalar(s), &[x]))
    }

    pub fn mean_all(&mut self, x: ValueId) -> Result<ValueId> {
        let n = self.value(x).len();
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    // ---------------------------------------------------------- backward ---

    /// Reverse sweep from a scalar loss. Every node is visited at most once;
    /// tracked leaves the loss never touched keep zero gradients.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        let mut touched = vec![false; self.nodes.len()];
        grads[loss.0][0] = 1.0;
        touched[loss.0] = true;

        for i in (0..=loss.0).rev() {
            if !touched[i] || !self.nodes[i].tracked {
                continue;
            }
            // Split so a node's own gradient can be read while parents are written.
            let (before, rest) = grads.split_at_mut(i);
            let g = &rest[0];
            let node = &self.nodes[i];
            let mut touch = |id: ValueId| touched[id.0] = true;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for (d, &s) in before[a.0].iter_mut().zip(g) {
                        *d += s;
                    }
                    for (d, &s) in before[b.0].iter_mut().zip(g) {
                        *d += s;
                    }
                    touch(*a);
                    touch(*b);
                }
                Op::Sub(a, b) => {
                    for (d, &s) in before[a.0].iter_mut().zip(g) {
                        *d += s;
                    }
                    for (d, &s) in before[b.0].iter_mut().zip(g) {
                        *d -= s;
                    }
                    touch(*a);
                    touch(*b);
                }
                Op::Mul(a, b) => {
                    if a.0 == b.0 {
                        let va = self.value(*a).data();
                        for ((d, &s), &x) in before[a.0].iter_mut().zip(g).zip(va) {
                            *d += 2.0 * s * x;
                        }
                    } else {
                        let va = self.value(*a).data();
                        let vb = self.value(*b).data();
                        for ((d, &s), &y) in before[a.0].iter_mut().zip(g).zip(vb) {
                            *d += s * y;
                        }
                        for ((d, &s), &x) in before[b.0].iter_mut().zip(g).zip(va) {
                            *d += s * x;
                        }
                    }
                    touch(*a);
                    touch(*b);
                }
                Op::Scale(a, k) => {
                    for (d, &s) in before[a.0].iter_mut().zip(g) {
                        *d += k * s;
                    }
                    touch(*a);
                }
                Op::Matmul { a, b, r, k, c } => {
                    let mut ga = vec![0.0; r * k];
                    let mut gb = vec![0.0; k * c];
                    kernels::matmul_backward(
                        self.value(*a).data(),
                        self.value(*b).data(),
                        g,
                        *r,
                        *k,
                        *c,
                        &mut ga,
                        &mut gb,
                    );
                    accumulate(&mut before[a.0], &ga);
                    accumulate(&mut before[b.0], &gb);
                    touch(*a);
                    touch(*b);
                }
                Op::MatVec { m, v, r, k } => {
                    let mut gm = vec![0.0; r * k];
                    let mut gv = vec![0.0; *k];
                    kernels::matvec_backward(
                        self.value(*m).data(),
                        self.value(*v).data(),
                        g,
                        *r,
                        *k,
                        &mut gm,
                        &mut gv,
                    );
                    accumulate(&mut before[m.0], &gm);
                    accumulate(&mut before[v.0], &gv);
                    touch(*m);
                    touch(*v);
                }
                Op::Conv3d {
                    input,
                    kernels: kern,
                    dims,
                } => {
                    let mut gi = vec![0.0; self.value(*input).len()];
                    let mut gk = vec![0.0; self.value(*kern).len()];
                    kernels::conv3d_backward(
                        self.value(*input).data(),
                        self.value(*kern).data(),
                        g,
                        dims,
                        &mut gi,
                        &mut gk,
                    );
                    accumulate(&mut before[input.0], &gi);
                    accumulate(&mut before[kern.0], &gk);
                    touch(*input);
                    touch(*kern);
                }
                Op::Conv1d {
                    input,
                    kernels: kern,
                    dims,
                } => {
                    let mut gi = vec![0.0; self.value(*input).len()];
                    let mut gk = vec![0.0; self.value(*kern).len()];
                    kernels::conv1d_backward(
                        self.value(*input).data(),
                        self.value(*kern).data(),
                        g,
                        dims,
                        &mut gi,
                        &mut gk,
                    );
                    accumulate(&mut before[input.0], &gi);
                    accumulate(&mut before[kern.0], &gk);
                    touch(*input);
                    touch(*kern);
                }
                Op::AddChannelBias { x, bias, spatial } => {
                    for (d, &s) in before[x.0].iter_mut().zip(g) {
                        *d += s;
                    }
                    let gb = &mut before[bias.0];
                    for (i, &s) in g.iter().enumerate() {
                        gb[i / spatial] += s;
                    }
                    touch(*x);
                    touch(*bias);
                }
                Op::Relu(x) => {
                    let vx = self.value(*x).data();
                    for ((d, &s), &v) in before[x.0].iter_mut().zip(g).zip(vx) {
                        if v > 0.0 {
                            *d += s;
                        }
                    }
                    touch(*x);
                }
                Op::Elu(x) => {
                    let vx = self.value(*x).data();
                    for ((d, &s), &v) in before[x.0].iter_mut().zip(g).zip(vx) {
                        *d += if v > 0.0 { s } else { s * v.exp() };
                    }
                    touch(*x);
                }
                Op::Sigmoid(x) => {
                    let vy = node.value.data();
                    for ((d, &s), &y) in before[x.0].iter_mut().zip(g).zip(vy) {
                        *d += s * y * (1.0 - y);
                    }
                    touch(*x);
                }
                Op::Tanh(x) => {
                    let vy = node.value.data();
                    for ((d, &s), &y) in before[x.0].iter_mut().zip(g).zip(vy) {
                        *d += s * (1.0 - y * y);
                    }
                    touch(*x);
                }
                Op::Sqrt(x) => {
                    let vy = node.value.data();
                    for ((d, &s), &y) in before[x.0].iter_mut().zip(g).zip(vy) {
                        *d += s * 0.5 / y;
                    }
                    touch(*x);
                }
                Op::Abs(x) => {
                    let vx = self.value(*x).data();
                    for ((d, &s), &v) in before[x.0].iter_mut().zip(g).zip(vx) {
                        *d += s * if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                    }
                    touch(*x);
                }
                Op::Dropout { x, mask } => {
                    for ((d, &s), &m) in before[x.0].iter_mut().zip(g).zip(mask) {
                        *d += s * m;
                    }
                    touch(*x);
                }
                Op::GroupNorm {
                    x,
                    gain,
                    bias,
                    channels,
                    spatial,
                    groups,
                    cache,
                } => {
                    let mut gx = vec![0.0; self.value(*x).len()];
                    let mut gg = vec![0.0; *channels];
                    let mut gb = vec![0.0; *channels];
                    kernels::group_norm_backward(
                        g,
                        self.value(*gain).data(),
                        cache,
                        *channels,
                        *spatial,
                        *groups,
                        &mut gx,
                        &mut gg,
                        &mut gb,
                    );
                    accumulate(&mut before[x.0], &gx);
                    accumulate(&mut before[gain.0], &gg);
                    accumulate(&mut before[bias.0], &gb);
                    touch(*x);
                    touch(*gain);
                    touch(*bias);
                }
                Op::AvgPool2x2 { x, lead, h, w } => {
                    kernels::avg_pool2x2_backward(g, *lead, *h, *w, &mut before[x.0]);
                    touch(*x);
                }
                Op::GlobalAvg {
                    x,
                    channels,
                    spatial,
                } => {
                    kernels::global_avg_backward(g, *channels, *spatial, &mut before[x.0]);
                    touch(*x);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        for (d, &s) in before[p.0].iter_mut().zip(&g[off..off + n]) {
                            *d += s;
                        }
                        off += n;
                        touch(p);
                    }
                }
                Op::Slice { x, start, len } => {
                    for (d, &s) in before[x.0][*start..start + len].iter_mut().zip(g) {
                        *d += s;
                    }
                    touch(*x);
                }
                Op::Reshape(x) => {
                    for (d, &s) in before[x.0].iter_mut().zip(g) {
                        *d += s;
                    }
                    touch(*x);
                }
                Op::SumAll(x) => {
                    let s = g[0];
                    for d in before[x.0].iter_mut() {
                        *d += s;
                    }
                    touch(*x);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

//! Parameter registry and the dense/conv/LSTM building blocks shared by the
//! worker and manager networks.
//!
//! A network owns a `ParamSet` of named tensors. Each forward pass binds the
//! set onto a fresh tape (`bind`), producing one `ValueId` per parameter in
//! registry order; layer structs hold registry indices, not tensors, so the
//! same description drives training, inference, and checkpointing.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{lstm_step, LstmWeightIds, Tape, Tensor, ValueId};
use crate::error::{Error, Result};

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Weight initialization source. `Uniform` draws from U(−1/√fan_in, 1/√fan_in);
/// `Zeros` builds the all-zero network used by the trivial-output tests
/// (normalization gains still start at one, the affine identity).
#[allow(clippy::large_enum_variant)]
pub enum Init {
    Zeros,
    Uniform(ChaCha8Rng),
}

impl Init {
    pub fn seeded(seed: u64) -> Self {
        Init::Uniform(ChaCha8Rng::seed_from_u64(seed))
    }

    fn tensor(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Uniform(rng) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                Tensor::uniform(shape, -bound, bound, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
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

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t).collect()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Leaves every parameter on the tape, in registry order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<ValueId> {
        self.entries
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect()
    }

    /// All parameter values as one flat vector, registry order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_len());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`Self::flatten`]; length must match exactly.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_len() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} values, registry holds {}",
                flat.len(),
                self.scalar_len()
            )));
        }
        let mut offset = 0;
        for (_, t) in &mut self.entries {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Replaces the tensor called `name`; shape must match the registered one.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::contract(format!("unknown parameter `{name}`")))?;
        if entry.1.shape() != tensor.shape() {
            return Err(Error::shape(format!(
                "parameter `{name}` has shape {:?}, replacement is {:?}",
                entry.1.shape(),
                tensor.shape()
            )));
        }
        entry.1 = tensor;
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Dense layer y = Wx + b with W: [out×in].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
}

impl Dense {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        init: &mut Init,
    ) -> Self {
        let w = params.add(format!("{prefix}.w"), init.tensor(vec![out_dim, in_dim], in_dim));
        let b = params.add(format!("{prefix}.b"), init.tensor(vec![out_dim], in_dim));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[ValueId], x: ValueId) -> Result<ValueId> {
        let y = tape.matvec(bound[self.w], x)?;
        tape.add(y, bound[self.b])
    }
}

/// 3-D convolution kernels + per-channel bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv3dBlock {
    pub kernels: usize,
    pub bias: usize,
}

impl Conv3dBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kd: usize,
        kh: usize,
        kw: usize,
        init: &mut Init,
    ) -> Self {
        let fan_in = c_in * kd * kh * kw;
        let kernels = params.add(
            format!("{prefix}.kernels"),
            init.tensor(vec![c_out, c_in, kd, kh, kw], fan_in),
        );
        let bias = params.add(format!("{prefix}.bias"), init.tensor(vec![c_out], fan_in));
        Self { kernels, bias }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[ValueId],
        x: ValueId,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<ValueId> {
        let y = tape.conv3d(x, bound[self.kernels], stride, pad)?;
        tape.add_channel_bias(y, bound[self.bias])
    }
}

/// 1-D convolution kernels + per-channel bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1dBlock {
    pub kernels: usize,
    pub bias: usize,
}

impl Conv1dBlock {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        init: &mut Init,
    ) -> Self {
        let fan_in = c_in * k;
        let kernels = params.add(
            format!("{prefix}.kernels"),
            init.tensor(vec![c_out, c_in, k], fan_in),
        );
        let bias = params.add(format!("{prefix}.bias"), init.tensor(vec![c_out], fan_in));
        Self { kernels, bias }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[ValueId],
        x: ValueId,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let y = tape.conv1d(x, bound[self.kernels], stride, pad)?;
        tape.add_channel_bias(y, bound[self.bias])
    }
}

/// One LSTM cell's four weight tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmBlock {
    pub w_ih: usize,
    pub w_hh: usize,
    pub b_ih: usize,
    pub b_hh: usize,
    pub hidden: usize,
}

impl LstmBlock {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        init: &mut Init,
    ) -> Self {
        let w_ih = params.add(
            format!("{prefix}.w_ih"),
            init.tensor(vec![4 * hidden, input], hidden),
        );
        let w_hh = params.add(
            format!("{prefix}.w_hh"),
            init.tensor(vec![4 * hidden, hidden], hidden),
        );
        let b_ih = params.add(format!("{prefix}.b_ih"), init.tensor(vec![4 * hidden], hidden));
        let b_hh = params.add(format!("{prefix}.b_hh"), init.tensor(vec![4 * hidden], hidden));
        Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            hidden,
        }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        bound: &[ValueId],
        x: ValueId,
        h: ValueId,
        c: ValueId,
    ) -> Result<(ValueId, ValueId)> {
        let ids = LstmWeightIds {
            w_ih: bound[self.w_ih],
            w_hh: bound[self.w_hh],
            b_ih: bound[self.b_ih],
            b_hh: bound[self.b_hh],
        };
        lstm_step(tape, x, h, c, &ids)
    }

    /// Zero hidden and cell state as untracked constants.
    pub fn zero_state(&self, tape: &mut Tape) -> (ValueId, ValueId) {
        let h = tape.constant(Tensor::zeros(vec![self.hidden]));
        let c = tape.constant(Tensor::zeros(vec![self.hidden]));
        (h, c)
    }
}

/// Per-channel gain/bias pair for group normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBlock {
    pub gain: usize,
    pub bias: usize,
    pub groups: usize,
}

impl NormBlock {
    pub fn new(params: &mut ParamSet, prefix: &str, width: usize, groups: usize) -> Self {
        let gain = params.add(format!("{prefix}.gain"), Tensor::full(vec![width], 1.0));
        let bias = params.add(format!("{prefix}.bias"), Tensor::zeros(vec![width]));
        Self { gain, bias, groups }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[ValueId], x: ValueId) -> Result<ValueId> {
        tape.group_norm(x, self.groups, GROUP_NORM_EPS, bound[self.gain], bound[self.bias])
    }
}

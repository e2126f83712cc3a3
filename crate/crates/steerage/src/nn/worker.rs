//! The steering-angle worker network.
//!
//! Four 3-D convolution stages (conv → ReLU → dropout), each stage's output
//! retained; the final stage is flattened through a two-layer FC stack; the
//! FC output and per-stage projections (global average pool + linear map to
//! the feature width) are summed, passed through ELU and group
//! normalization; the resulting feature vector, the subroutine id g, and the
//! previous predicted angle drive one LSTM step; the head maps
//! concat(LSTM output, feature) to a single angle.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manager::SubroutineId;
use super::param::{Conv3dBlock, Dense, Init, LstmBlock, NormBlock, ParamSet};
use crate::autodiff::{Tape, Tensor, ValueId};
use crate::error::{Error, Result};

pub const WORKER_STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    /// Frames per input sequence.
    pub m: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv_channels: [usize; WORKER_STAGES],
    /// Kernel extent along the frame axis; no depth padding, so each stage
    /// shortens the sequence by kernel_depth − 1.
    pub kernel_depth: usize,
    /// Spatial kernel extent; odd, padded to preserve height/width.
    pub kernel_hw: usize,
    /// 1-based stage numbers followed by 2×2 spatial average pooling.
    pub pool_after: Vec<usize>,
    pub feature_width: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
    pub norm_groups: usize,
    /// Width of the subroutine id input: 0 (none), 1 (scalar), 2 (centroid).
    pub id_arity: usize,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            m: 10,
            in_channels: 3,
            height: 16,
            width: 16,
            conv_channels: [8, 16, 24, 32],
            kernel_depth: 2,
            kernel_hw: 3,
            pool_after: vec![2, 4],
            feature_width: 64,
            lstm_hidden: 64,
            dropout: 0.25,
            norm_groups: 4,
            id_arity: 0,
        }
    }
}

/// Shape of one stage's retained output, plus whether the main path is
/// pooled after it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StagePlan {
    c: usize,
    d: usize,
    h: usize,
    w: usize,
    pooled: bool,
}

impl WorkerConfig {
    /// Validates the config and lays out every stage's output shape.
    fn plan(&self) -> Result<Vec<StagePlan>> {
        if self.m == 0 || self.in_channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config("worker input dimensions must be >= 1"));
        }
        if self.kernel_hw.is_multiple_of(2) || self.kernel_hw == 0 {
            return Err(Error::config(format!(
                "spatial kernel must be odd to preserve height/width, got {}",
                self.kernel_hw
            )));
        }
        if self.kernel_depth == 0 {
            return Err(Error::config("kernel depth must be >= 1"));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::config("conv channel counts must be >= 1"));
        }
        if self.feature_width == 0 || self.lstm_hidden == 0 {
            return Err(Error::config("feature and LSTM widths must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.norm_groups == 0 || !self.feature_width.is_multiple_of(self.norm_groups) {
            return Err(Error::config(format!(
                "feature width {} is not divisible into {} norm groups",
                self.feature_width, self.norm_groups
            )));
        }
        if self.id_arity > 2 {
            return Err(Error::config(format!(
                "subroutine id arity must be 0, 1, or 2, got {}",
                self.id_arity
            )));
        }
        for &s in &self.pool_after {
            if s == 0 || s > WORKER_STAGES {
                return Err(Error::config(format!(
                    "pool_after stages must be in 1..={WORKER_STAGES}, got {s}"
                )));
            }
        }

        let (mut d, mut h, mut w) = (self.m, self.height, self.width);
        let mut plan = Vec::with_capacity(WORKER_STAGES);
        for stage in 1..=WORKER_STAGES {
            if d < self.kernel_depth {
                return Err(Error::config(format!(
                    "stage {stage} input has depth {d}, smaller than kernel depth {}; \
                     reduce kernel_depth or increase m",
                    self.kernel_depth
                )));
            }
            d -= self.kernel_depth - 1;
            let pooled = self.pool_after.contains(&stage);
            plan.push(StagePlan {
                c: self.conv_channels[stage - 1],
                d,
                h,
                w,
                pooled,
            });
            if pooled {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::config(format!(
                        "stage {stage} output is {h}×{w}; 2×2 pooling needs even dims"
                    )));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok(plan)
    }

    /// Scalar count of the flattened final stage (FC stack input width).
    fn flat_len(&self, plan: &[StagePlan]) -> usize {
        let last = plan[WORKER_STAGES - 1];
        let (h, w) = if last.pooled {
            (last.h / 2, last.w / 2)
        } else {
            (last.h, last.w)
        };
        last.c * last.d * h * w
    }

    fn spatial_pad(&self) -> usize {
        (self.kernel_hw - 1) / 2
    }
}

/// One prediction step's tape handles.
#[derive(Debug, Clone, Copy)]
pub struct WorkerStep {
    pub angle: ValueId,
    pub h: ValueId,
    pub c: ValueId,
    /// Post-normalization feature vector (exposed for inspection tests).
    pub feature: ValueId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerNet {
    pub config: WorkerConfig,
    pub params: ParamSet,
    stages: Vec<Conv3dBlock>,
    fc1: Dense,
    fc2: Dense,
    skips: Vec<Dense>,
    norm: NormBlock,
    lstm: LstmBlock,
    head: Dense,
}

impl WorkerNet {
    pub fn new(config: WorkerConfig, init: &mut Init) -> Result<Self> {
        let plan = config.plan()?;
        let mut params = ParamSet::new();

        let mut stages = Vec::with_capacity(WORKER_STAGES);
        let mut c_in = config.in_channels;
        for (i, stage) in plan.iter().enumerate() {
            stages.push(Conv3dBlock::new(
                &mut params,
                &format!("worker.conv{}", i + 1),
                c_in,
                stage.c,
                config.kernel_depth,
                config.kernel_hw,
                config.kernel_hw,
                init,
            ));
            c_in = stage.c;
        }

        let flat = config.flat_len(&plan);
        let fw = config.feature_width;
        let fc1 = Dense::new(&mut params, "worker.fc1", flat, fw, init);
        let fc2 = Dense::new(&mut params, "worker.fc2", fw, fw, init);
        let skips = plan
            .iter()
            .enumerate()
            .map(|(i, stage)| {
                Dense::new(&mut params, &format!("worker.skip{}", i + 1), stage.c, fw, init)
            })
            .collect();
        let norm = NormBlock::new(&mut params, "worker.norm", fw, config.norm_groups);
        let lstm = LstmBlock::new(
            &mut params,
            "worker.lstm",
            fw + config.id_arity + 1,
            config.lstm_hidden,
            init,
        );
        let head = Dense::new(&mut params, "worker.head", config.lstm_hidden + fw, 1, init);

        Ok(Self {
            config,
            params,
            stages,
            fc1,
            fc2,
            skips,
            norm,
            lstm,
            head,
        })
    }

    pub fn seeded(config: WorkerConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut Init::seeded(seed))
    }

    pub fn zeros(config: WorkerConfig) -> Result<Self> {
        Self::new(config, &mut Init::Zeros)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<ValueId> {
        self.params.bind(tape)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (ValueId, ValueId) {
        self.lstm.zero_state(tape)
    }

    fn expected_input(&self) -> Vec<usize> {
        vec![
            self.config.in_channels,
            self.config.m,
            self.config.height,
            self.config.width,
        ]
    }

    /// One prediction step.
    ///
    /// `frames` is a [C×m×H×W] value, `g` the subroutine id (None iff the
    /// net was built with id_arity 0), `prev_angle` a [1] value, `state`
    /// the carried LSTM state. Dropout fires only when `training`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &[ValueId],
        frames: ValueId,
        g: Option<ValueId>,
        prev_angle: ValueId,
        state: (ValueId, ValueId),
        training: bool,
        rng: &mut R,
    ) -> Result<WorkerStep> {
        if tape.value(frames).shape() != self.expected_input().as_slice() {
            return Err(Error::shape(format!(
                "worker expects frames {:?}, got {:?}",
                self.expected_input(),
                tape.value(frames).shape()
            )));
        }
        let g_arity = g.map_or(0, |id| tape.value(id).len());
        if g_arity != self.config.id_arity {
            return Err(Error::contract(format!(
                "subroutine id has {} values, this worker consumes {}",
                g_arity, self.config.id_arity
            )));
        }
        if tape.value(prev_angle).shape() != [1] {
            return Err(Error::shape(format!(
                "prev_angle must be a [1] value, got {:?}",
                tape.value(prev_angle).shape()
            )));
        }

        let pad = self.config.spatial_pad();
        let mut x = frames;
        let mut retained = Vec::with_capacity(WORKER_STAGES);
        for (i, conv) in self.stages.iter().enumerate() {
            let y = conv.forward(tape, bound, x, [1, 1, 1], [0, pad, pad])?;
            let y = tape.relu(y)?;
            let y = tape.dropout(y, self.config.dropout, training, rng)?;
            retained.push(y);
            x = if self.config.pool_after.contains(&(i + 1)) {
                tape.avg_pool2x2(y)?
            } else {
                y
            };
        }

        let flat_len = tape.value(x).len();
        let flat = tape.reshape(x, vec![flat_len])?;
        let f1 = self.fc1.forward(tape, bound, flat)?;
        let f1 = tape.relu(f1)?;
        let f2 = self.fc2.forward(tape, bound, f1)?;
        let mut sum = tape.relu(f2)?;
        for (skip, &stage_out) in self.skips.iter().zip(&retained) {
            let pooled = tape.global_avg(stage_out)?;
            let proj = skip.forward(tape, bound, pooled)?;
            sum = tape.add(sum, proj)?;
        }

        let elu = tape.elu(sum)?;
        let feature = self.norm.forward(tape, bound, elu)?;

        let mut parts = vec![feature];
        if let Some(g) = g {
            parts.push(g);
        }
        parts.push(prev_angle);
        let lstm_in = tape.concat(&parts)?;
        let (h, c) = self.lstm.step(tape, bound, lstm_in, state.0, state.1)?;

        let head_in = tape.concat(&[h, feature])?;
        let angle = self.head.forward(tape, bound, head_in)?;
        Ok(WorkerStep {
            angle,
            h,
            c,
            feature,
        })
    }

    /// Inference convenience: fresh tape, dropout off, plain-tensor state.
    pub fn predict(
        &self,
        frames: &Tensor,
        g: &SubroutineId,
        prev_angle: f64,
        state: Option<(Tensor, Tensor)>,
    ) -> Result<(f64, (Tensor, Tensor))> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let frames = tape.constant(frames.clone());
        let g_id = match g.values() {
            v if v.is_empty() => None,
            v => Some(tape.constant(Tensor::vector(v))),
        };
        let prev = tape.constant(Tensor::scalar(prev_angle));
        let state = match state {
            Some((h, c)) => (tape.constant(h), tape.constant(c)),
            None => self.zero_state(&mut tape),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let step = self.forward(&mut tape, &bound, frames, g_id, prev, state, false, &mut rng)?;
        Ok((
            tape.value(step.angle).item()?,
            (tape.value(step.h).clone(), tape.value(step.c).clone()),
        ))
    }
}

//! The manager side of the hierarchy: the subroutine id value, the three
//! manager variants (centroid lookup, centroid-predicting CNN, learned
//! scalar network), and the mode tag tying them to a training run.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::{Conv1dBlock, Conv3dBlock, Dense, Init, LstmBlock, NormBlock, ParamSet};
use crate::autodiff::{Tape, Tensor, ValueId};
use crate::embed::{serving_window, CentroidSet, Embedding};
use crate::error::{Error, Result};

/// The goal signal g handed from manager to worker.
#[derive(Debug, Clone, PartialEq)]
pub enum SubroutineId {
    None,
    LearnedScalar(f64),
    Centroid2d([f64; 2]),
}

impl SubroutineId {
    pub fn tag(&self) -> &'static str {
        match self {
            SubroutineId::None => "none",
            SubroutineId::LearnedScalar(_) => "learned-scalar",
            SubroutineId::Centroid2d(_) => "centroid2d",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            SubroutineId::None => 0,
            SubroutineId::LearnedScalar(_) => 1,
            SubroutineId::Centroid2d(_) => 2,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            SubroutineId::None => vec![],
            SubroutineId::LearnedScalar(g) => vec![*g],
            SubroutineId::Centroid2d(c) => c.to_vec(),
        }
    }
}

/// Training/inference mode; decides which manager the pipeline builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    None,
    GtTsne,
    PredTsne,
    Learned,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::None, Mode::GtTsne, Mode::PredTsne, Mode::Learned];

    /// Width of the subroutine id this mode feeds the worker.
    pub fn id_arity(self) -> usize {
        match self {
            Mode::None => 0,
            Mode::GtTsne | Mode::PredTsne => 2,
            Mode::Learned => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::GtTsne => "gt-tsne",
            Mode::PredTsne => "pred-tsne",
            Mode::Learned => "learned",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mode::None),
            "gt-tsne" => Ok(Mode::GtTsne),
            "pred-tsne" => Ok(Mode::PredTsne),
            "learned" => Ok(Mode::Learned),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (expected none, gt-tsne, pred-tsne, or learned)"
            ))),
        }
    }
}

/// Frozen centroid table for gt-tsne mode: window → centroid assignments
/// plus the τ-shift rule, detached from the full embedding artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidLookup {
    pub m: usize,
    pub centroids: Vec<[f64; 2]>,
    /// Window τ (1-based) → centroid index at slot τ−1.
    pub assignment: Vec<usize>,
}

impl CentroidLookup {
    pub fn new(m: usize, centroids: Vec<[f64; 2]>, assignment: Vec<usize>) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("window length m must be >= 1"));
        }
        if let Some(&bad) = assignment.iter().find(|&&c| c >= centroids.len()) {
            return Err(Error::contract(format!(
                "assignment references centroid {bad}, only {} exist",
                centroids.len()
            )));
        }
        Ok(Self {
            m,
            centroids,
            assignment,
        })
    }

    pub fn from_centroid_set(m: usize, set: &CentroidSet) -> Result<Self> {
        Self::new(m, set.centroids.clone(), set.assignment.clone())
    }

    pub fn from_embedding(embedding: &Embedding) -> Result<Self> {
        Self::new(
            embedding.m,
            embedding.centroids.clone(),
            embedding.windows.iter().map(|w| w.centroid).collect(),
        )
    }

    pub fn lookup(&self, t: usize) -> Result<[f64; 2]> {
        let tau = serving_window(t, self.m, self.assignment.len())?;
        Ok(self.centroids[self.assignment[tau - 1]])
    }
}

pub const MANAGER_STAGES: usize = 3;

/// Configuration of the learned-scalar manager (1-D mirror of the worker).
#[derive(Debug, Clone, PartialEq)]
pub struct SubroutineIdNetConfig {
    /// Length of the previous-angle window it consumes.
    pub m: usize,
    pub conv_channels: [usize; MANAGER_STAGES],
    /// Odd kernel length, padded to preserve the sequence length.
    pub kernel_len: usize,
    pub feature_width: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
    pub norm_groups: usize,
}

impl Default for SubroutineIdNetConfig {
    fn default() -> Self {
        Self {
            m: 10,
            conv_channels: [8, 16, 24],
            kernel_len: 3,
            feature_width: 32,
            lstm_hidden: 32,
            dropout: 0.25,
            norm_groups: 4,
        }
    }
}

impl SubroutineIdNetConfig {
    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("manager window length m must be >= 1"));
        }
        if self.kernel_len.is_multiple_of(2) || self.kernel_len == 0 {
            return Err(Error::config(format!(
                "1-D kernel must be odd to preserve length, got {}",
                self.kernel_len
            )));
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
        Ok(())
    }
}

/// One manager step's tape handles.
#[derive(Debug, Clone, Copy)]
pub struct ManagerStep {
    /// The scalar goal g, a [1] value with no output activation.
    pub g: ValueId,
    pub h: ValueId,
    pub c: ValueId,
}

/// Learned manager: 3 stages of (conv1d → ReLU → dropout) over the previous
/// m predicted angles, FC stack + skip sums, ELU + group norm, LSTM, and an
/// activation-free scalar head (g is unbounded by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SubroutineIdNet {
    pub config: SubroutineIdNetConfig,
    pub params: ParamSet,
    stages: Vec<Conv1dBlock>,
    fc1: Dense,
    fc2: Dense,
    skips: Vec<Dense>,
    norm: NormBlock,
    lstm: LstmBlock,
    head: Dense,
}

impl SubroutineIdNet {
    pub fn new(config: SubroutineIdNetConfig, init: &mut Init) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();

        let mut stages = Vec::with_capacity(MANAGER_STAGES);
        let mut c_in = 1;
        for (i, &c_out) in config.conv_channels.iter().enumerate() {
            stages.push(Conv1dBlock::new(
                &mut params,
                &format!("manager.conv{}", i + 1),
                c_in,
                c_out,
                config.kernel_len,
                init,
            ));
            c_in = c_out;
        }

        let flat = config.conv_channels[MANAGER_STAGES - 1] * config.m;
        let fw = config.feature_width;
        let fc1 = Dense::new(&mut params, "manager.fc1", flat, fw, init);
        let fc2 = Dense::new(&mut params, "manager.fc2", fw, fw, init);
        let skips = config
            .conv_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| Dense::new(&mut params, &format!("manager.skip{}", i + 1), c, fw, init))
            .collect();
        let norm = NormBlock::new(&mut params, "manager.norm", fw, config.norm_groups);
        let lstm = LstmBlock::new(&mut params, "manager.lstm", fw, config.lstm_hidden, init);
        let head = Dense::new(&mut params, "manager.head", config.lstm_hidden + fw, 1, init);

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

    pub fn seeded(config: SubroutineIdNetConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut Init::seeded(seed))
    }

    pub fn zeros(config: SubroutineIdNetConfig) -> Result<Self> {
        Self::new(config, &mut Init::Zeros)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<ValueId> {
        self.params.bind(tape)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (ValueId, ValueId) {
        self.lstm.zero_state(tape)
    }

    /// One manager step over `angles`, a [m] value of the previous m
    /// predicted angles, oldest first.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &[ValueId],
        angles: ValueId,
        state: (ValueId, ValueId),
        training: bool,
        rng: &mut R,
    ) -> Result<ManagerStep> {
        if tape.value(angles).shape() != [self.config.m] {
            return Err(Error::shape(format!(
                "manager expects [{}] previous angles, got {:?}",
                self.config.m,
                tape.value(angles).shape()
            )));
        }

        let pad = (self.config.kernel_len - 1) / 2;
        let mut x = tape.reshape(angles, vec![1, self.config.m])?;
        let mut retained = Vec::with_capacity(MANAGER_STAGES);
        for conv in &self.stages {
            let y = conv.forward(tape, bound, x, 1, pad)?;
            let y = tape.relu(y)?;
            let y = tape.dropout(y, self.config.dropout, training, rng)?;
            retained.push(y);
            x = y;
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
        let (h, c) = self.lstm.step(tape, bound, feature, state.0, state.1)?;
        let head_in = tape.concat(&[h, feature])?;
        let g = self.head.forward(tape, bound, head_in)?;
        Ok(ManagerStep { g, h, c })
    }

    /// Inference convenience: fresh tape, dropout off, plain-tensor state.
    pub fn predict(
        &self,
        angles: &[f64],
        state: Option<(Tensor, Tensor)>,
    ) -> Result<(f64, (Tensor, Tensor))> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let angles = tape.constant(Tensor::vector(angles.to_vec()));
        let state = match state {
            Some((h, c)) => (tape.constant(h), tape.constant(c)),
            None => self.zero_state(&mut tape),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let step = self.forward(&mut tape, &bound, angles, state, false, &mut rng)?;
        Ok((
            tape.value(step.g).item()?,
            (tape.value(step.h).clone(), tape.value(step.c).clone()),
        ))
    }
}

/// Configuration of the centroid-predicting manager.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneManagerConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv_channels: [usize; MANAGER_STAGES],
    /// Odd spatial kernel, padded to preserve dims before each 2×2 pool.
    pub kernel_hw: usize,
}

impl Default for TsneManagerConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            height: 16,
            width: 16,
            conv_channels: [8, 16, 24],
            kernel_hw: 3,
        }
    }
}

impl TsneManagerConfig {
    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config("tsne manager input dimensions must be >= 1"));
        }
        if self.kernel_hw.is_multiple_of(2) {
            return Err(Error::config(format!(
                "spatial kernel must be odd to preserve dims, got {}",
                self.kernel_hw
            )));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::config("conv channel counts must be >= 1"));
        }
        let pool_factor = 1 << MANAGER_STAGES;
        if !self.height.is_multiple_of(pool_factor) || !self.width.is_multiple_of(pool_factor) {
            return Err(Error::config(format!(
                "height/width must be divisible by {pool_factor} for {MANAGER_STAGES} pooling \
                 stages, got {}×{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Centroid-predicting manager: 3 stages of (conv → ReLU → 2×2 pool) over
/// the newest frame, then a dense head emitting 2 t-SNE coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneManagerNet {
    pub config: TsneManagerConfig,
    pub params: ParamSet,
    stages: Vec<Conv3dBlock>,
    head: Dense,
}

impl TsneManagerNet {
    pub fn new(config: TsneManagerConfig, init: &mut Init) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut stages = Vec::with_capacity(MANAGER_STAGES);
        let mut c_in = config.in_channels;
        for (i, &c_out) in config.conv_channels.iter().enumerate() {
            stages.push(Conv3dBlock::new(
                &mut params,
                &format!("tsne.conv{}", i + 1),
                c_in,
                c_out,
                1,
                config.kernel_hw,
                config.kernel_hw,
                init,
            ));
            c_in = c_out;
        }
        let pool_factor = 1 << MANAGER_STAGES;
        let flat = config.conv_channels[MANAGER_STAGES - 1]
            * (config.height / pool_factor)
            * (config.width / pool_factor);
        let head = Dense::new(&mut params, "tsne.head", flat, 2, init);
        Ok(Self {
            config,
            params,
            stages,
            head,
        })
    }

    pub fn seeded(config: TsneManagerConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut Init::seeded(seed))
    }

    pub fn zeros(config: TsneManagerConfig) -> Result<Self> {
        Self::new(config, &mut Init::Zeros)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<ValueId> {
        self.params.bind(tape)
    }

    /// Predicts the 2-D centroid from `frame`, a [C×H×W] value.
    pub fn forward(&self, tape: &mut Tape, bound: &[ValueId], frame: ValueId) -> Result<ValueId> {
        let expected = [self.config.in_channels, self.config.height, self.config.width];
        if tape.value(frame).shape() != expected {
            return Err(Error::shape(format!(
                "tsne manager expects a frame {:?}, got {:?}",
                expected,
                tape.value(frame).shape()
            )));
        }
        let pad = (self.config.kernel_hw - 1) / 2;
        let mut x = tape.reshape(
            frame,
            vec![self.config.in_channels, 1, self.config.height, self.config.width],
        )?;
        for conv in &self.stages {
            let y = conv.forward(tape, bound, x, [1, 1, 1], [0, pad, pad])?;
            let y = tape.relu(y)?;
            x = tape.avg_pool2x2(y)?;
        }
        let flat_len = tape.value(x).len();
        let flat = tape.reshape(x, vec![flat_len])?;
        self.head.forward(tape, bound, flat)
    }

    pub fn predict(&self, frame: &Tensor) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let frame = tape.constant(frame.clone());
        let out = self.forward(&mut tape, &bound, frame)?;
        let data = tape.value(out).data();
        Ok([data[0], data[1]])
    }
}

/// The manager actually driving a run; variant matches [`Mode`].
#[derive(Debug, Clone, PartialEq)]
pub enum Manager {
    None,
    GtTsne(CentroidLookup),
    PredTsne(TsneManagerNet),
    Learned(SubroutineIdNet),
}

impl Manager {
    pub fn mode(&self) -> Mode {
        match self {
            Manager::None => Mode::None,
            Manager::GtTsne(_) => Mode::GtTsne,
            Manager::PredTsne(_) => Mode::PredTsne,
            Manager::Learned(_) => Mode::Learned,
        }
    }
}

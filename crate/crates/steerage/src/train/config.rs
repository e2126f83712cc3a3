//! Training configuration and its flat key=value form, shared by config
//! files, CLI overrides, and checkpoints.

use super::loss::LossKind;
use crate::error::{Error, Result};
use crate::nn::{Mode, SubroutineIdNetConfig, TsneManagerConfig, WorkerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Temporal abstraction: frames per worker input, samples per action
    /// window, angles per manager window.
    pub m: usize,
    /// Centroid count for the embedding-driven modes.
    pub k: usize,
    pub loss: LossKind,
    pub lr: f64,
    pub betas: (f64, f64),
    pub epochs: usize,
    /// Contiguous subsequences per optimizer step.
    pub batch_size: usize,
    /// Prediction steps per subsequence after the 2m context prefix.
    pub steps_per_sequence: usize,
    pub seed: u64,
    pub dropout: f64,
    pub train_fraction: f64,
    /// Horizontal-flip augmentation (skipped in the centroid-target modes,
    /// whose embedding is tied to the unflipped stream).
    pub augment: bool,
    pub conv_channels: [usize; 4],
    pub kernel_depth: usize,
    pub kernel_hw: usize,
    pub feature_width: usize,
    pub lstm_hidden: usize,
    pub norm_groups: usize,
    pub manager_channels: [usize; 3],
    pub manager_kernel: usize,
    pub manager_feature: usize,
    pub manager_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::None,
            m: 10,
            k: 10,
            loss: LossKind::Mse,
            lr: 1e-4,
            betas: (0.9, 0.999),
            epochs: 30,
            batch_size: 4,
            steps_per_sequence: 10,
            seed: 0,
            dropout: 0.25,
            train_fraction: 0.75,
            augment: true,
            conv_channels: [8, 16, 24, 32],
            kernel_depth: 2,
            kernel_hw: 3,
            feature_width: 64,
            lstm_hidden: 64,
            norm_groups: 4,
            manager_channels: [8, 16, 24],
            manager_kernel: 3,
            manager_feature: 32,
            manager_hidden: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m must be >= 1"));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.steps_per_sequence == 0 {
            return Err(Error::config(
                "batch_size and steps_per_sequence must be >= 1",
            ));
        }
        if !(2..=64).contains(&self.k) {
            return Err(Error::config(format!("k must be in 2..=64, got {}", self.k)));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Worker shape for frames of the given geometry; id arity follows mode.
    pub fn worker_config(&self, in_channels: usize, height: usize, width: usize) -> WorkerConfig {
        WorkerConfig {
            m: self.m,
            in_channels,
            height,
            width,
            conv_channels: self.conv_channels,
            kernel_depth: self.kernel_depth,
            kernel_hw: self.kernel_hw,
            pool_after: vec![2, 4],
            feature_width: self.feature_width,
            lstm_hidden: self.lstm_hidden,
            dropout: self.dropout,
            norm_groups: self.norm_groups,
            id_arity: self.mode.id_arity(),
        }
    }

    pub fn learned_manager_config(&self) -> SubroutineIdNetConfig {
        SubroutineIdNetConfig {
            m: self.m,
            conv_channels: self.manager_channels,
            kernel_len: self.manager_kernel,
            feature_width: self.manager_feature,
            lstm_hidden: self.manager_hidden,
            dropout: self.dropout,
            norm_groups: self.norm_groups,
        }
    }

    pub fn tsne_manager_config(
        &self,
        in_channels: usize,
        height: usize,
        width: usize,
    ) -> TsneManagerConfig {
        TsneManagerConfig {
            in_channels,
            height,
            width,
            conv_channels: self.manager_channels,
            kernel_hw: self.kernel_hw,
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let four = |v: [usize; 4]| format!("{},{},{},{}", v[0], v[1], v[2], v[3]);
        let three = |v: [usize; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        vec![
            ("mode".into(), self.mode.as_str().into()),
            ("m".into(), self.m.to_string()),
            ("k".into(), self.k.to_string()),
            ("loss".into(), self.loss.as_str().into()),
            ("lr".into(), self.lr.to_string()),
            ("beta1".into(), self.betas.0.to_string()),
            ("beta2".into(), self.betas.1.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("steps_per_sequence".into(), self.steps_per_sequence.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("dropout".into(), self.dropout.to_string()),
            ("train_fraction".into(), self.train_fraction.to_string()),
            ("augment".into(), self.augment.to_string()),
            ("conv_channels".into(), four(self.conv_channels)),
            ("kernel_depth".into(), self.kernel_depth.to_string()),
            ("kernel_hw".into(), self.kernel_hw.to_string()),
            ("feature_width".into(), self.feature_width.to_string()),
            ("lstm_hidden".into(), self.lstm_hidden.to_string()),
            ("norm_groups".into(), self.norm_groups.to_string()),
            ("manager_channels".into(), three(self.manager_channels)),
            ("manager_kernel".into(), self.manager_kernel.to_string()),
            ("manager_feature".into(), self.manager_feature.to_string()),
            ("manager_hidden".into(), self.manager_hidden.to_string()),
        ]
    }

    /// Applies `pairs` over the defaults; unknown keys are rejected so a
    /// typo never silently trains the wrong model.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_pairs(pairs)?;
        Ok(cfg)
    }

    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (key, value) in pairs {
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "m" => self.m = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "loss" => self.loss = value.parse()?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.betas.0 = num(key, value)?,
            "beta2" => self.betas.1 = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "steps_per_sequence" => self.steps_per_sequence = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "augment" => self.augment = num(key, value)?,
            "conv_channels" => self.conv_channels = parse_channels::<4>(key, value)?,
            "kernel_depth" => self.kernel_depth = num(key, value)?,
            "kernel_hw" => self.kernel_hw = num(key, value)?,
            "feature_width" => self.feature_width = num(key, value)?,
            "lstm_hidden" => self.lstm_hidden = num(key, value)?,
            "norm_groups" => self.norm_groups = num(key, value)?,
            "manager_channels" => self.manager_channels = parse_channels::<3>(key, value)?,
            "manager_kernel" => self.manager_kernel = num(key, value)?,
            "manager_feature" => self.manager_feature = num(key, value)?,
            "manager_hidden" => self.manager_hidden = num(key, value)?,
            other => {
                return Err(Error::config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }
}

fn parse_channels<const N: usize>(key: &str, value: &str) -> Result<[usize; N]> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
        })
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|_| {
        Error::config(format!(
            "{key}: expected {N} comma-separated channel counts, got `{value}`"
        ))
    })
}

//! Flat key=value run configuration: training fields plus pipeline paths
//! and knobs. Unknown keys are rejected; relative paths resolve against
//! the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::SynthConfig;
use crate::embed::{TsneConfig, DEFAULT_ZERO_BAND};
use crate::error::{Error, Result};
use crate::plot::DEFAULT_CENTROID_COLOR;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub log: Option<PathBuf>,
    /// Base directory for relative frame paths; defaults to the log's directory.
    pub frame_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub zero_band: f64,
    pub synth_n: usize,
    pub image_size: usize,
    pub noise: f64,
    pub centroid_color: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tsne = TsneConfig::default();
        let synth = SynthConfig::default();
        Self {
            train: TrainConfig::default(),
            log: None,
            frame_dir: None,
            out_dir: None,
            checkpoint: None,
            embedding: None,
            predictions: None,
            perplexity: tsne.perplexity,
            tsne_iterations: tsne.iterations,
            zero_band: DEFAULT_ZERO_BAND,
            synth_n: synth.n,
            image_size: synth.image_size,
            noise: synth.noise,
            centroid_color: DEFAULT_CENTROID_COLOR.to_string(),
        }
    }
}

impl RunConfig {
    /// Applies one key. Path values resolve against `base`; training keys
    /// are delegated, so typos fail loudly here too.
    pub fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
        }
        let path = |value: &str| -> PathBuf {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "log" => self.log = Some(path(value)),
            "frame_dir" => self.frame_dir = Some(path(value)),
            "out_dir" => self.out_dir = Some(path(value)),
            "checkpoint" => self.checkpoint = Some(path(value)),
            "embedding" => self.embedding = Some(path(value)),
            "predictions" => self.predictions = Some(path(value)),
            "perplexity" => self.perplexity = num(key, value)?,
            "tsne_iterations" => self.tsne_iterations = num(key, value)?,
            "zero_band" => self.zero_band = num(key, value)?,
            "synth_n" => self.synth_n = num(key, value)?,
            "image_size" => self.image_size = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "centroid_color" => self.centroid_color = value.to_string(),
            _ => self.train.apply(key, value)?,
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blanks are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let base = origin.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            cfg.apply(key.trim(), value.trim(), &base)
                .map_err(|e| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

//! Action windows: length-3m vectors [steering..., throttle..., brake...]
//! cut from the driving stream every m samples.

use crate::data::record::DrivingRecord;
use crate::error::{Error, Result};

/// Window τ (1-based) covering samples t ∈ [(τ−1)·m, τ·m).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionWindow {
    pub tau: usize,
    pub vector: Vec<f64>,
}

impl ActionWindow {
    pub fn m(&self) -> usize {
        self.vector.len() / 3
    }

    pub fn steering(&self) -> &[f64] {
        &self.vector[..self.m()]
    }

    pub fn throttle(&self) -> &[f64] {
        &self.vector[self.m()..2 * self.m()]
    }

    pub fn brake(&self) -> &[f64] {
        &self.vector[2 * self.m()..]
    }
}

/// Cuts ⌊T/m⌋ windows; the trailing T mod m samples are dropped. Fewer than
/// m records yields an empty result.
pub fn make_windows(records: &[DrivingRecord], m: usize) -> Result<Vec<ActionWindow>> {
    if m == 0 {
        return Err(Error::config("window length m must be >= 1"));
    }
    let count = records.len() / m;
    let mut windows = Vec::with_capacity(count);
    for tau in 1..=count {
        let chunk = &records[(tau - 1) * m..tau * m];
        let mut vector = Vec::with_capacity(3 * m);
        vector.extend(chunk.iter().map(|r| r.angle));
        vector.extend(chunk.iter().map(|r| r.throttle));
        vector.extend(chunk.iter().map(|r| r.brake));
        windows.push(ActionWindow { tau, vector });
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignLabel {
    Negative,
    NearZero,
    Positive,
}

impl SignLabel {
    /// Stable small integer for purity computations and plotting.
    pub fn index(self) -> usize {
        match self {
            SignLabel::Negative => 0,
            SignLabel::NearZero => 1,
            SignLabel::Positive => 2,
        }
    }
}

/// Classifies a window by its mean steering angle. The band is closed:
/// a mean of exactly ±zero_band counts as near-zero.
pub fn window_sign_label(w: &ActionWindow, zero_band: f64) -> SignLabel {
    let s = w.steering();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    if mean < -zero_band {
        SignLabel::Negative
    } else if mean > zero_band {
        SignLabel::Positive
    } else {
        SignLabel::NearZero
    }
}

pub const DEFAULT_ZERO_BAND: f64 = 0.05;
